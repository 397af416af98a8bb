#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>

#include "privmarket/core.hpp"
#include "privmarket/softmax.hpp"

namespace privmarket {

enum class OracleKind { Additive, Diminishing, Harm, Classifier };

const char* to_string(OracleKind kind);
OracleKind oracle_kind_from_string(std::string_view name);

/// Parameters of the analytic accuracy functions. These exist so mechanism
/// results have closed forms the tests can check exactly.
struct SyntheticParams {
  std::map<UserId, double> weights;  // w_n in [0,1]; missing users weigh 0
  double base = 0.0;                 // harm kind only
  double harm_threshold = 1.0;       // rho > 0, harm kind only
};

/// The accuracy function f: a user subset (with its declared privacy
/// levels, read from the market) maps to accuracy in [0,1].
///
///   additive     f(S) = min(1, sum w_n / (1 + p_n))
///   diminishing  f(S) = 1 - prod (1 - w_n / (1 + p_n))
///   harm         f(S) = clamp(base + sum w_n (1 - p_n / rho), 0, 1)
///   classifier   accuracy on the held-out test set of a softmax model
///                trained on the subset's anonymized records
///
/// Evaluation is pure; the classifier kind memoizes by subset signature so
/// Shapley enumeration never retrains the same subset twice.
class AccuracyOracle {
 public:
  static AccuracyOracle additive(SyntheticParams params);
  static AccuracyOracle diminishing(SyntheticParams params);
  static AccuracyOracle harm(SyntheticParams params);
  static AccuracyOracle classifier(Dataset test_set,
                                   ClassifierParams params = {});

  OracleKind kind() const { return kind_; }
  bool is_synthetic() const { return kind_ != OracleKind::Classifier; }

  double evaluate(const MarketState& market,
                  std::span<const UserId> subset) const;

  /// f of the empty subset: 0, 0, base, or chance level respectively.
  double empty_value() const;

  /// Payoff tolerance separating true zeros from rounding: 1e-9 for the
  /// analytic kinds, half an accuracy quantum for the classifier.
  double default_epsilon() const;

  /// Canonical cache key: (oracle fingerprint, noise seed, sorted
  /// member:level pairs). Equal subsets yield equal keys.
  std::string subset_signature(const MarketState& market,
                               std::span<const UserId> subset) const;

  /// Number of non-memoized evaluations so far (instrumentation).
  std::uint64_t evaluations() const { return state_->evaluations.load(); }

  double weight(UserId user) const;
  const SyntheticParams& synthetic_params() const { return params_; }
  const Dataset& test_set() const;
  const ClassifierParams& classifier_params() const { return hyper_; }

 private:
  struct CacheState {
    std::mutex mutex;
    std::unordered_map<std::string, double> memo;
    std::atomic<std::uint64_t> evaluations{0};
  };

  AccuracyOracle(OracleKind kind, SyntheticParams params);
  double evaluate_uncached(const MarketState& market,
                           std::span<const UserId> sorted) const;

  OracleKind kind_ = OracleKind::Additive;
  SyntheticParams params_;
  std::optional<Dataset> test_set_;
  ClassifierParams hyper_;
  std::string fingerprint_;
  std::shared_ptr<CacheState> state_ = std::make_shared<CacheState>();
};

}  // namespace privmarket
