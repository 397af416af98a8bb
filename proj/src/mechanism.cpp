#include "privmarket/mechanism.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <unordered_map>

#include "privmarket/rng.hpp"

namespace privmarket {

const char* to_string(ContributionClass c) {
  switch (c) {
    case ContributionClass::Pivotal: return "pivotal";
    case ContributionClass::Neutral: return "neutral";
    case ContributionClass::Negative: return "negative";
  }
  return "?";
}

ContributionClass contribution_from_string(std::string_view name) {
  if (name == "pivotal") return ContributionClass::Pivotal;
  if (name == "neutral") return ContributionClass::Neutral;
  if (name == "negative") return ContributionClass::Negative;
  throw ConfigError("unknown contribution class: '" + std::string(name) +
                    "'");
}

const char* to_string(ShapleyMethod m) {
  return m == ShapleyMethod::Exact ? "exact" : "mc";
}

ShapleyMethod shapley_method_from_string(std::string_view name) {
  if (name == "exact") return ShapleyMethod::Exact;
  if (name == "mc" || name == "monte_carlo") return ShapleyMethod::MonteCarlo;
  throw ConfigError("unknown shapley method: '" + std::string(name) + "'");
}

namespace {

std::vector<UserId> all_but(const std::vector<UserId>& users, UserId n) {
  std::vector<UserId> rest;
  rest.reserve(users.size() - 1);
  for (UserId id : users) {
    if (id != n) rest.push_back(id);
  }
  return rest;
}

ContributionClass classify(double payoff, double epsilon) {
  if (payoff > epsilon) return ContributionClass::Pivotal;
  if (payoff < -epsilon) return ContributionClass::Negative;
  return ContributionClass::Neutral;
}

}  // namespace

double vcg_payoff(const MarketState& market, const AccuracyOracle& oracle,
                  UserId n) {
  market.submission(n);  // LookupError if unknown
  const std::vector<UserId> users = market.users();
  return oracle.evaluate(market, users) -
         oracle.evaluate(market, all_but(users, n));
}

PayoffReport payoffs_all(const MarketState& market,
                         const AccuracyOracle& oracle,
                         std::optional<double> epsilon) {
  if (market.submissions().empty()) {
    throw ParameterError("payoffs require a non-empty market");
  }
  PayoffReport report;
  report.epsilon = epsilon.value_or(oracle.default_epsilon());
  const std::vector<UserId> users = market.users();
  report.f_full = oracle.evaluate(market, users);
  report.users.reserve(users.size());
  for (UserId n : users) {
    const double payoff =
        report.f_full - oracle.evaluate(market, all_but(users, n));
    report.users.push_back({n, payoff, classify(payoff, report.epsilon)});
  }
  return report;
}

FilterResult filter_negative_contributors(const MarketState& market,
                                          const AccuracyOracle& oracle,
                                          std::optional<double> epsilon) {
  FilterResult result;
  result.retained = market;
  result.payoffs = payoffs_all(result.retained, oracle, epsilon);
  while (true) {
    const UserPayoff* worst = nullptr;
    for (const UserPayoff& u : result.payoffs.users) {
      if (u.contribution == ContributionClass::Negative &&
          (worst == nullptr || u.payoff < worst->payoff)) {
        worst = &u;  // ascending scan, so ties keep the lowest id
      }
    }
    if (worst == nullptr) break;
    result.excluded.push_back(worst->user);
    result.retained = result.retained.without_user(worst->user);
    if (result.retained.submissions().empty()) {
      result.payoffs = PayoffReport{};
      result.payoffs.epsilon = epsilon.value_or(oracle.default_epsilon());
      result.payoffs.f_full = oracle.empty_value();
      break;
    }
    result.payoffs = payoffs_all(result.retained, oracle, epsilon);
  }
  return result;
}

double coalition_payoff(const MarketState& market,
                        const AccuracyOracle& oracle, CoalitionId id) {
  const Coalition& c = market.coalition(id);
  const std::vector<UserId> users = market.users();
  std::vector<UserId> rest;
  rest.reserve(users.size());
  for (UserId u : users) {
    if (!std::binary_search(c.members.begin(), c.members.end(), u)) {
      rest.push_back(u);
    }
  }
  return oracle.evaluate(market, users) - oracle.evaluate(market, rest);
}

struct CharacteristicFunction::Cache {
  std::mutex mutex;
  std::unordered_map<std::uint64_t, double> values;
};

CharacteristicFunction::CharacteristicFunction(const MarketState& market,
                                               const AccuracyOracle& oracle,
                                               CoalitionId id)
    : market_(&market),
      oracle_(&oracle),
      coalition_(id),
      cache_(std::make_shared<Cache>()) {
  members_ = market.coalition(id).members;
  for (UserId u : market.users()) {
    if (!std::binary_search(members_.begin(), members_.end(), u)) {
      outside_.push_back(u);
    }
  }
  base_ = oracle.evaluate(market, outside_);
}

double CharacteristicFunction::operator()(
    const std::set<UserId>& subset) const {
  std::uint64_t mask = 0;
  for (UserId u : subset) {
    const auto it = std::lower_bound(members_.begin(), members_.end(), u);
    if (it == members_.end() || *it != u) {
      throw MembershipError("user " + std::to_string(u) +
                            " is not a member of coalition " +
                            std::to_string(coalition_));
    }
    mask |= std::uint64_t{1} << (it - members_.begin());
  }
  return value_by_mask(mask);
}

double CharacteristicFunction::value_by_mask(std::uint64_t mask) const {
  if (mask == 0) return 0.0;
  {
    std::scoped_lock lock(cache_->mutex);
    const auto it = cache_->values.find(mask);
    if (it != cache_->values.end()) return it->second;
  }
  std::vector<UserId> subset = outside_;
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (mask & (std::uint64_t{1} << i)) subset.push_back(members_[i]);
  }
  const double value = oracle_->evaluate(*market_, subset) - base_;
  std::scoped_lock lock(cache_->mutex);
  return cache_->values.emplace(mask, value).first->second;
}

ShapleyResult shapley_exact(const CharacteristicFunction& v,
                            std::size_t exact_limit) {
  const std::size_t k = v.members().size();
  if (k > exact_limit || k > 25) {
    throw ParameterError(
        "coalition of " + std::to_string(k) +
        " members exceeds the exact enumeration limit of " +
        std::to_string(std::min<std::size_t>(exact_limit, 25)) +
        "; use the Monte Carlo method");
  }
  const std::uint64_t full = (std::uint64_t{1} << k) - 1;
  std::vector<double> values(full + 1);
  for (std::uint64_t mask = 0; mask <= full; ++mask) {
    values[mask] = v.value_by_mask(mask);
  }

  std::vector<double> fact(k + 1, 1.0);
  for (std::size_t i = 1; i <= k; ++i) {
    fact[i] = fact[i - 1] * static_cast<double>(i);
  }
  std::vector<double> coeff(k);  // weight of a subset of size s
  for (std::size_t s = 0; s < k; ++s) {
    coeff[s] = fact[s] * fact[k - 1 - s] / fact[k];
  }

  ShapleyResult result;
  result.method = ShapleyMethod::Exact;
  for (std::size_t i = 0; i < k; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    double phi = 0.0;
    for (std::uint64_t mask = 0; mask <= full; ++mask) {
      if (mask & bit) continue;
      phi += coeff[std::popcount(mask)] * (values[mask | bit] - values[mask]);
    }
    result.allocations[v.members()[i]] = phi;
  }
  return result;
}

ShapleyResult shapley_monte_carlo(const CharacteristicFunction& v,
                                  std::uint64_t permutations,
                                  std::uint64_t seed, kernels::Exec exec) {
  if (permutations == 0) {
    throw ParameterError("at least one permutation is required");
  }
  const std::size_t k = v.members().size();
  if (k == 1) {
    // Every permutation yields the same marginal; return it unaveraged.
    ShapleyResult result;
    result.method = ShapleyMethod::MonteCarlo;
    result.permutations = permutations;
    result.allocations[v.members()[0]] = v.value_by_mask(1);
    result.standard_error[v.members()[0]] = 0.0;
    return result;
  }
  std::vector<double> marginals(permutations * k);

  const auto run_one = [&](std::uint64_t t) {
    std::vector<std::size_t> order(k);
    for (std::size_t i = 0; i < k; ++i) order[i] = i;
    rng::SplitMix64 g(rng::derive(seed, {t}));
    for (std::size_t i = k; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(g.next_below(i));
      std::swap(order[i - 1], order[j]);
    }
    std::uint64_t prefix = 0;
    double before = 0.0;  // v(empty)
    for (std::size_t pos = 0; pos < k; ++pos) {
      const std::uint64_t next = prefix | (std::uint64_t{1} << order[pos]);
      const double after = v.value_by_mask(next);
      marginals[t * k + order[pos]] = after - before;
      prefix = next;
      before = after;
    }
  };

  if (exec == kernels::Exec::Serial) {
    for (std::uint64_t t = 0; t < permutations; ++t) run_one(t);
  } else {
    const std::int64_t n = static_cast<std::int64_t>(permutations);
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < n; ++t) {
      run_one(static_cast<std::uint64_t>(t));
    }
  }

  // Two-pass mean/stderr, reduced in permutation order. Compensated sums
  // keep the mean exact when the marginals are constant (additive games).
  ShapleyResult result;
  result.method = ShapleyMethod::MonteCarlo;
  result.permutations = permutations;
  const double inv_t = 1.0 / static_cast<double>(permutations);
  for (std::size_t i = 0; i < k; ++i) {
    kernels::DD sum;
    for (std::uint64_t t = 0; t < permutations; ++t) {
      sum.add(marginals[t * k + i]);
    }
    const double mean = sum.value() * inv_t;
    kernels::DD sq;
    for (std::uint64_t t = 0; t < permutations; ++t) {
      const double d = marginals[t * k + i] - mean;
      sq.add(d * d);
    }
    const UserId member = v.members()[i];
    result.allocations[member] = mean;
    result.standard_error[member] =
        permutations > 1
            ? std::sqrt(sq.value() / static_cast<double>(permutations - 1)) *
                  std::sqrt(inv_t)
            : 0.0;
  }
  return result;
}

}  // namespace privmarket
