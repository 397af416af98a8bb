#pragma once

// Shared fixture builders and independent oracles used across the suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "privmarket/anonymize.hpp"
#include "privmarket/core.hpp"
#include "privmarket/mechanism.hpp"
#include "privmarket/oracle.hpp"
#include "privmarket/rng.hpp"

namespace testutil {

using namespace privmarket;

inline Record make_record(UserId user, std::int32_t label,
                          std::vector<double> features) {
  Record r;
  r.owner = OwnerId::user(user);
  r.label = label;
  r.features = std::move(features);
  return r;
}

/// count records for one user, fixed dimension, labels cycling over
/// `classes`, feature values from a seeded stream.
inline Dataset user_dataset(UserId user, std::size_t count, std::size_t dim,
                            std::int32_t classes = 2,
                            std::uint64_t seed = 1) {
  rng::SplitMix64 g(rng::derive(seed, {user}));
  std::vector<Record> records;
  records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> fs(dim);
    for (double& f : fs) f = 2.0 * g.next_unit() - 1.0;
    records.push_back(make_record(
        user, static_cast<std::int32_t>(i % classes), std::move(fs)));
  }
  return Dataset(std::move(records), dim);
}

/// Market whose submissions carry no data, only declared levels. Enough
/// for every synthetic-oracle path.
inline MarketState levels_market(const std::map<UserId, double>& levels,
                                 std::uint64_t noise_seed = 0) {
  MarketState::Builder b;
  b.noise_seed(noise_seed);
  for (const auto& [user, p] : levels) {
    b.add(make_submission(user, Dataset{}, PrivacyLevel(p)));
  }
  return std::move(b).build();
}

/// Class-conditional Gaussian clusters: class k centered at
/// separation * e_k (dim >= classes), unit intra-class noise. Each entry of
/// `user_sizes` contributes that many records split evenly over classes.
inline Dataset cluster_fixture(const std::map<UserId, std::size_t>& user_sizes,
                               std::int32_t classes, std::size_t dim,
                               double separation, std::uint64_t seed) {
  std::vector<Record> records;
  for (const auto& [user, size] : user_sizes) {
    rng::SplitMix64 g(rng::derive(seed, {user, 0xC1A55}));
    for (std::size_t i = 0; i < size; ++i) {
      const auto label = static_cast<std::int32_t>(i % classes);
      std::vector<double> fs(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        // Box-Muller pair per feature keeps the stream simple.
        const double u1 = g.next_unit();
        const double u2 = g.next_unit();
        fs[j] = std::sqrt(-2.0 * std::log(u1)) *
                std::cos(2.0 * 3.141592653589793 * u2);
      }
      fs[static_cast<std::size_t>(label) % dim] += separation;
      records.push_back(make_record(user, label, std::move(fs)));
    }
  }
  return Dataset(std::move(records), dim);
}

/// WISDM-style raw text: `rows` samples per (user, activity).
inline std::string wisdm_text(const std::vector<UserId>& users,
                              const std::vector<std::string>& activities,
                              std::size_t rows, std::uint64_t seed = 9) {
  std::ostringstream out;
  for (UserId u : users) {
    for (const std::string& a : activities) {
      rng::SplitMix64 g(rng::derive(seed, {u, std::hash<std::string>{}(a)}));
      for (std::size_t i = 0; i < rows; ++i) {
        out << u << ',' << a << ',' << (1000000 + i * 50000000) << ','
            << format_double(2.0 * g.next_unit() - 1.0) << ','
            << format_double(9.8 + g.next_unit()) << ','
            << format_double(g.next_unit()) << ";\n";
      }
    }
  }
  return out.str();
}

/// Independent Shapley oracle: average marginal contribution over all k!
/// join orders, straight from the definition. Only for small k.
inline std::map<UserId, double> shapley_by_permutations(
    const CharacteristicFunction& v) {
  std::vector<UserId> order = v.members();
  std::sort(order.begin(), order.end());
  const std::size_t k = order.size();
  std::map<UserId, double> sums;
  for (UserId u : order) sums[u] = 0.0;
  std::size_t count = 0;
  do {
    std::set<UserId> prefix;
    double before = v(prefix);
    for (UserId u : order) {
      prefix.insert(u);
      const double after = v(prefix);
      sums[u] += after - before;
      before = after;
    }
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& [u, s] : sums) s /= static_cast<double>(count);
  return sums;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& a,
                       const std::vector<double>& b) {
  const auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a);
  const std::vector<double> rb = ranks(b);
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

inline std::string csv_of(const Dataset& d) {
  std::ostringstream out;
  write_csv(d, out);
  return out.str();
}

}  // namespace testutil
