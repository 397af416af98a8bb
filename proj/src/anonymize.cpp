#include "privmarket/anonymize.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "privmarket/rng.hpp"

namespace privmarket {

namespace {

// Per-record stream keys: (seed, owner, index within that owner's records).
std::vector<std::uint64_t> record_keys(const Dataset& data,
                                       std::uint64_t seed) {
  std::vector<std::uint64_t> keys(data.size());
  std::map<std::uint64_t, std::uint64_t> next_index;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::uint64_t owner = data.records()[i].owner.key();
    const std::uint64_t idx = next_index[owner]++;
    keys[i] = rng::derive(seed, {owner, idx});
  }
  return keys;
}

void noise_one_record(Record& r, std::uint64_t record_key, double sigma) {
  for (std::size_t j = 0; j < r.features.size(); ++j) {
    r.features[j] +=
        sigma * rng::standard_normal(rng::combine(record_key, j));
  }
}

void noise_serial(std::vector<Record>& records,
                  std::span<const std::uint64_t> keys, double sigma) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    noise_one_record(records[i], keys[i], sigma);
  }
}

void noise_parallel(std::vector<Record>& records,
                    std::span<const std::uint64_t> keys, double sigma) {
  const std::int64_t n = static_cast<std::int64_t>(records.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    noise_one_record(records[i], keys[i], sigma);
  }
}

}  // namespace

Dataset anonymize(const Dataset& data, const GaussianNoiseSpec& spec,
                  kernels::Exec exec) {
  const double p = spec.variance.value();
  if (p == 0.0) return data;
  const double sigma = std::sqrt(p);
  std::vector<Record> records = data.records();
  const auto keys = record_keys(data, spec.seed);
  if (exec == kernels::Exec::Serial) {
    noise_serial(records, keys, sigma);
  } else {
    noise_parallel(records, keys, sigma);
  }
  return Dataset(std::move(records), data.dim());
}

double t_closeness_level(const Submission& sub) {
  return sub.privacy.value();
}

std::map<UserId, PrivacyLevel> t_closeness_levels(const Submission& sub) {
  if (!sub.member_levels.empty()) return sub.member_levels;
  if (sub.owner.kind == OwnerKind::User) {
    return {{sub.owner.value, sub.privacy}};
  }
  return {};
}

int k_anonymity_level(const Coalition& c) {
  if (c.members.empty()) {
    throw ParameterError("k-anonymity undefined for an empty coalition");
  }
  return static_cast<int>(c.members.size());
}

Submission generalize_identity(const Coalition& c,
                               std::span<const Submission> subs,
                               std::uint64_t shuffle_seed) {
  if (c.members.empty()) {
    throw ParameterError("cannot generalize an empty coalition");
  }
  std::map<UserId, PrivacyLevel> levels;
  std::vector<Record> merged;
  std::size_t dim = 0;
  double max_level = 0.0;
  for (const Submission& sub : subs) {
    if (sub.owner.kind != OwnerKind::User ||
        !std::binary_search(c.members.begin(), c.members.end(),
                            sub.owner.value)) {
      throw MembershipError("submission owner " + to_string(sub.owner) +
                            " is not a member of coalition " +
                            std::to_string(c.id));
    }
    levels[sub.owner.value] = sub.privacy;
    max_level = std::max(max_level, sub.privacy.value());
    if (!sub.data.empty()) dim = sub.data.dim();
    for (Record r : sub.data.records()) {
      r.owner = OwnerId::coalition(c.id);
      merged.push_back(std::move(r));
    }
  }
  // Fisher-Yates with a seeded stream; position must not leak membership.
  rng::SplitMix64 g(rng::derive(shuffle_seed, {c.id, merged.size()}));
  for (std::size_t i = merged.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(g.next_below(i));
    std::swap(merged[i - 1], merged[j]);
  }
  Submission out;
  out.owner = OwnerId::coalition(c.id);
  out.data = Dataset(std::move(merged), dim);
  out.privacy = PrivacyLevel(max_level);
  out.member_levels = std::move(levels);
  return out;
}

}  // namespace privmarket
