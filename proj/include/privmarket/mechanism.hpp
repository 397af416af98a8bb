#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "privmarket/kernels.hpp"
#include "privmarket/oracle.hpp"

namespace privmarket {

enum class ContributionClass { Pivotal, Neutral, Negative };

const char* to_string(ContributionClass c);
ContributionClass contribution_from_string(std::string_view name);

struct UserPayoff {
  UserId user = 0;
  double payoff = 0.0;
  ContributionClass contribution = ContributionClass::Neutral;
};

struct PayoffReport {
  double f_full = 0.0;
  double epsilon = 0.0;
  std::vector<UserPayoff> users;  // ascending user id
};

/// Marginal contribution of one user: f(D) - f(D minus n).
double vcg_payoff(const MarketState& market, const AccuracyOracle& oracle,
                  UserId n);

/// Payoffs for every user, sharing one evaluation of the full dataset.
/// Each user is pivotal (F > eps), neutral (|F| <= eps) or negative
/// (F < -eps); eps defaults to the oracle's tolerance.
PayoffReport payoffs_all(const MarketState& market,
                         const AccuracyOracle& oracle,
                         std::optional<double> epsilon = {});

struct FilterResult {
  MarketState retained;
  std::vector<UserId> excluded;  // in removal order
  PayoffReport payoffs;          // recomputed on the retained market
};

/// Repeatedly removes the single most negative contributor (ties to the
/// lowest user id) until every remaining payoff is >= -eps.
FilterResult filter_negative_contributors(const MarketState& market,
                                          const AccuracyOracle& oracle,
                                          std::optional<double> epsilon = {});

/// Marginal contribution of a whole coalition: f(D) - f(D minus K).
double coalition_payoff(const MarketState& market,
                        const AccuracyOracle& oracle, CoalitionId id);

/// Sub-coalition value anchored at the outside users' data:
///   v(S) = f(D_{-K} union D_S) - f(D_{-K})
/// which forces v(empty) = 0 and v(members) = coalition_payoff, so an
/// efficient allocation distributes exactly the coalition's payoff.
/// Values are memoized per subset; safe for concurrent use.
class CharacteristicFunction {
 public:
  CharacteristicFunction(const MarketState& market,
                         const AccuracyOracle& oracle, CoalitionId id);

  const std::vector<UserId>& members() const { return members_; }
  CoalitionId coalition() const { return coalition_; }

  double operator()(const std::set<UserId>& subset) const;

  /// Positional encoding: bit i selects members()[i].
  double value_by_mask(std::uint64_t mask) const;

 private:
  struct Cache;
  const MarketState* market_;
  const AccuracyOracle* oracle_;
  CoalitionId coalition_ = 0;
  std::vector<UserId> members_;
  std::vector<UserId> outside_;
  double base_ = 0.0;  // f(D_{-K})
  std::shared_ptr<Cache> cache_;
};

enum class ShapleyMethod { Exact, MonteCarlo };

const char* to_string(ShapleyMethod m);
ShapleyMethod shapley_method_from_string(std::string_view name);

struct ShapleyResult {
  ShapleyMethod method = ShapleyMethod::Exact;
  std::uint64_t permutations = 0;               // Monte Carlo only
  std::map<UserId, double> allocations;
  std::map<UserId, double> standard_error;      // Monte Carlo only
};

/// Exact Shapley value by subset enumeration (2^k evaluations, each subset
/// computed once through the memoized characteristic function).
ShapleyResult shapley_exact(const CharacteristicFunction& v,
                            std::size_t exact_limit = 10);

/// Permutation-sampling estimate. Permutation t is generated from
/// hash(seed, t) and the marginals reduce in permutation order, so the
/// estimate is identical for any execution schedule or thread count.
ShapleyResult shapley_monte_carlo(const CharacteristicFunction& v,
                                  std::uint64_t permutations,
                                  std::uint64_t seed,
                                  kernels::Exec exec = kernels::Exec::Parallel);

}  // namespace privmarket
