#pragma once

#include <cstdint>
#include <map>
#include <span>

#include "privmarket/core.hpp"
#include "privmarket/kernels.hpp"

namespace privmarket {

/// Zero-mean i.i.d. Gaussian noise, one independent draw per feature value
/// (the identity-covariance model scaled by the variance p).
struct GaussianNoiseSpec {
  PrivacyLevel variance;
  std::uint64_t seed = 0;
};

/// Adds N(0, p) to every feature value. Labels and owners untouched; p = 0
/// returns the input bit-for-bit. Each scalar's draw is keyed by
/// (seed, owner, record index within owner, feature index), so anonymizing
/// any subset of a user's records agrees with anonymizing the whole.
Dataset anonymize(const Dataset& data, const GaussianNoiseSpec& spec,
                  kernels::Exec exec = kernels::Exec::Parallel);

/// The declared level doubles as the t-closeness proxy (t = p).
double t_closeness_level(const Submission& sub);

/// Per-member levels; coalition submissions report each member separately.
std::map<UserId, PrivacyLevel> t_closeness_levels(const Submission& sub);

/// k = coalition size.
int k_anonymity_level(const Coalition& c);

/// Merges the members' submissions under the coalition identity: every
/// record re-tagged with the CoalitionId and the concatenation shuffled by
/// a seeded permutation so neither tags nor positions reveal membership.
Submission generalize_identity(const Coalition& c,
                               std::span<const Submission> subs,
                               std::uint64_t shuffle_seed);

}  // namespace privmarket
