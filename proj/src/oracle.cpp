#include "privmarket/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <vector>

#include "privmarket/rng.hpp"

namespace privmarket {

const char* to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::Additive: return "additive";
    case OracleKind::Diminishing: return "diminishing";
    case OracleKind::Harm: return "harm";
    case OracleKind::Classifier: return "classifier";
  }
  return "?";
}

OracleKind oracle_kind_from_string(std::string_view name) {
  if (name == "additive") return OracleKind::Additive;
  if (name == "diminishing") return OracleKind::Diminishing;
  if (name == "harm") return OracleKind::Harm;
  if (name == "classifier") return OracleKind::Classifier;
  throw ConfigError("unknown oracle kind: '" + std::string(name) + "'");
}

namespace {

void validate_weights(const SyntheticParams& params) {
  for (const auto& [user, w] : params.weights) {
    if (!(w >= 0.0 && w <= 1.0)) {
      throw ParameterError("weight of user " + std::to_string(user) +
                           " must lie in [0,1]");
    }
  }
}

std::uint64_t dataset_fingerprint(const Dataset& data) {
  std::uint64_t h = rng::mix64(data.dim());
  for (const Record& r : data.records()) {
    h = rng::combine(h, r.owner.key());
    h = rng::combine(h, static_cast<std::uint32_t>(r.label));
    for (double v : r.features) {
      h = rng::combine(h, std::bit_cast<std::uint64_t>(v));
    }
  }
  return h;
}

}  // namespace

AccuracyOracle::AccuracyOracle(OracleKind kind, SyntheticParams params)
    : kind_(kind), params_(std::move(params)) {
  validate_weights(params_);
  std::ostringstream fp;
  fp << to_string(kind_);
  for (const auto& [user, w] : params_.weights) {
    fp << '|' << user << ':' << format_double(w);
  }
  if (kind_ == OracleKind::Harm) {
    fp << "|b:" << format_double(params_.base)
       << "|rho:" << format_double(params_.harm_threshold);
  }
  fingerprint_ = fp.str();
}

AccuracyOracle AccuracyOracle::additive(SyntheticParams params) {
  double total = 0.0;
  for (const auto& [user, w] : params.weights) total += w;
  if (total > 1.0 + 1e-12) {
    throw ParameterError(
        "additive oracle weights must sum to at most 1 so the cap never "
        "binds");
  }
  return AccuracyOracle(OracleKind::Additive, std::move(params));
}

AccuracyOracle AccuracyOracle::diminishing(SyntheticParams params) {
  return AccuracyOracle(OracleKind::Diminishing, std::move(params));
}

AccuracyOracle AccuracyOracle::harm(SyntheticParams params) {
  if (!(params.harm_threshold > 0.0)) {
    throw ParameterError("harm threshold rho must be positive");
  }
  if (!(params.base >= 0.0 && params.base <= 1.0)) {
    throw ParameterError("harm base accuracy must lie in [0,1]");
  }
  return AccuracyOracle(OracleKind::Harm, std::move(params));
}

AccuracyOracle AccuracyOracle::classifier(Dataset test_set,
                                          ClassifierParams params) {
  if (test_set.empty()) {
    throw ConfigError("classifier oracle requires a non-empty test set");
  }
  AccuracyOracle oracle(OracleKind::Classifier, SyntheticParams{});
  oracle.hyper_ = params;
  std::ostringstream fp;
  fp << "classifier|test:" << std::hex << dataset_fingerprint(test_set)
     << std::dec << "|it:" << params.iterations
     << "|step:" << format_double(params.step)
     << "|l2:" << format_double(params.l2);
  oracle.fingerprint_ = fp.str();
  oracle.test_set_ = std::move(test_set);
  return oracle;
}

const Dataset& AccuracyOracle::test_set() const {
  if (!test_set_) {
    throw ConfigError("only the classifier oracle has a test set");
  }
  return *test_set_;
}

double AccuracyOracle::weight(UserId user) const {
  const auto it = params_.weights.find(user);
  return it == params_.weights.end() ? 0.0 : it->second;
}

double AccuracyOracle::empty_value() const {
  switch (kind_) {
    case OracleKind::Additive:
    case OracleKind::Diminishing:
      return 0.0;
    case OracleKind::Harm:
      return std::clamp(params_.base, 0.0, 1.0);
    case OracleKind::Classifier:
      return 1.0 / static_cast<double>(test_set_->label_set().size());
  }
  return 0.0;
}

double AccuracyOracle::default_epsilon() const {
  if (kind_ == OracleKind::Classifier) {
    return 0.5 / static_cast<double>(test_set_->size());
  }
  return 1e-9;
}

std::string AccuracyOracle::subset_signature(
    const MarketState& market, std::span<const UserId> subset) const {
  std::vector<UserId> sorted(subset.begin(), subset.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::ostringstream key;
  key << fingerprint_ << "#seed:" << market.noise_seed() << '#';
  for (UserId id : sorted) {
    key << 'u' << id << ':'
        << format_double(market.submission(id).privacy.value()) << ',';
  }
  return key.str();
}

double AccuracyOracle::evaluate_uncached(
    const MarketState& market, std::span<const UserId> sorted) const {
  state_->evaluations.fetch_add(1, std::memory_order_relaxed);
  switch (kind_) {
    case OracleKind::Additive: {
      double sum = 0.0;
      for (UserId id : sorted) {
        sum += weight(id) / (1.0 + market.submission(id).privacy.value());
      }
      return std::min(1.0, sum);
    }
    case OracleKind::Diminishing: {
      double survive = 1.0;
      for (UserId id : sorted) {
        survive *=
            1.0 - weight(id) / (1.0 + market.submission(id).privacy.value());
      }
      return 1.0 - survive;
    }
    case OracleKind::Harm: {
      double acc = params_.base;
      for (UserId id : sorted) {
        const double p = market.submission(id).privacy.value();
        acc += weight(id) * (1.0 - p / params_.harm_threshold);
      }
      return std::clamp(acc, 0.0, 1.0);
    }
    case OracleKind::Classifier: {
      std::vector<Dataset> parts;
      parts.reserve(sorted.size());
      for (UserId id : sorted) parts.push_back(market.submission(id).data);
      const Dataset train = dataset_union(parts);
      if (train.empty()) return empty_value();
      const SoftmaxModel model = train_classifier(train, hyper_);
      return model_accuracy(model, *test_set_);
    }
  }
  return 0.0;
}

double AccuracyOracle::evaluate(const MarketState& market,
                                std::span<const UserId> subset) const {
  std::vector<UserId> sorted(subset.begin(), subset.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (UserId id : sorted) market.submission(id);  // LookupError if unknown
  if (sorted.empty()) return empty_value();

  if (kind_ != OracleKind::Classifier) {
    return evaluate_uncached(market, sorted);
  }
  const std::string key = subset_signature(market, sorted);
  {
    std::scoped_lock lock(state_->mutex);
    const auto it = state_->memo.find(key);
    if (it != state_->memo.end()) return it->second;
  }
  // Computed outside the lock; duplicated concurrent work is idempotent.
  const double value = evaluate_uncached(market, sorted);
  std::scoped_lock lock(state_->mutex);
  return state_->memo.emplace(key, value).first->second;
}

}  // namespace privmarket
