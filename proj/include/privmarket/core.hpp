#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "privmarket/errors.hpp"

namespace privmarket {

using UserId = std::uint32_t;
using CoalitionId = std::uint32_t;

/// Record owners live in two disjoint id namespaces: plain users and
/// coalition (generalization) identities.
enum class OwnerKind : std::uint8_t { User = 0, Coalition = 1 };

struct OwnerId {
  OwnerKind kind = OwnerKind::User;
  std::uint32_t value = 0;

  static constexpr OwnerId user(UserId id) { return {OwnerKind::User, id}; }
  static constexpr OwnerId coalition(CoalitionId id) {
    return {OwnerKind::Coalition, id};
  }

  /// Packed form used for hashing and seed derivation.
  constexpr std::uint64_t key() const {
    return (static_cast<std::uint64_t>(kind) << 32) | value;
  }

  friend constexpr auto operator<=>(const OwnerId&, const OwnerId&) = default;
};

/// "u12" for users, "c3" for coalitions.
std::string to_string(OwnerId id);
OwnerId parse_owner(std::string_view text);

/// One labeled sensing frame: M feature values, a class code, an owner tag.
struct Record {
  OwnerId owner;
  std::int32_t label = 0;
  std::vector<double> features;
};

/// Ordered collection of records sharing one feature dimension. Immutable
/// after construction; the empty dataset stands for the empty set.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Record> records, std::size_t dim);

  const std::vector<Record>& records() const { return records_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Distinct class codes present, ascending.
  const std::vector<std::int32_t>& label_set() const { return label_set_; }

 private:
  std::vector<Record> records_;
  std::vector<std::int32_t> label_set_;
  std::size_t dim_ = 0;
};

/// Declared per-feature Gaussian noise variance; p = 0 means true data.
class PrivacyLevel {
 public:
  PrivacyLevel() = default;
  explicit PrivacyLevel(double p);
  double value() const { return p_; }

  friend auto operator<=>(const PrivacyLevel&, const PrivacyLevel&) = default;

 private:
  double p_ = 0.0;
};

/// One participant's anonymized contribution with its declared level.
/// Coalition submissions carry the member levels so per-member t-closeness
/// stays reportable after identity generalization.
struct Submission {
  OwnerId owner;
  Dataset data;
  PrivacyLevel privacy;
  std::map<UserId, PrivacyLevel> member_levels;
};

/// Validates that every record carries the owner tag.
Submission make_submission(UserId owner, Dataset data, PrivacyLevel privacy);

struct Coalition {
  CoalitionId id = 0;
  std::vector<UserId> members;  // sorted, unique, non-empty
};

/// All submissions plus registered coalitions. Immutable once built; the
/// leave-out views derive from it without mutation.
class MarketState {
 public:
  class Builder {
   public:
    Builder& noise_seed(std::uint64_t seed);
    Builder& add(Submission submission);
    Builder& add_coalition(CoalitionId id, std::vector<UserId> members);
    MarketState build() &&;

   private:
    std::map<UserId, Submission> submissions_;
    std::vector<Coalition> coalitions_;
    std::uint64_t noise_seed_ = 0;
  };

  const std::map<UserId, Submission>& submissions() const {
    return submissions_;
  }
  const std::vector<Coalition>& coalitions() const { return coalitions_; }
  std::uint64_t noise_seed() const { return noise_seed_; }

  std::vector<UserId> users() const;
  const Submission& submission(UserId id) const;
  const Coalition& coalition(CoalitionId id) const;
  bool has_user(UserId id) const { return submissions_.contains(id); }

  /// D-tilde: union of every submission.
  Dataset full_union() const;

  /// Copy of this market without one user (submission dropped, coalition
  /// membership removed, empty coalitions dissolved).
  MarketState without_user(UserId id) const;

  /// Copy with one user's submission replaced (or added).
  MarketState with_submission(Submission submission) const;

  /// Copy with one more registered coalition.
  MarketState with_coalition(CoalitionId id, std::vector<UserId> members) const;

 private:
  std::map<UserId, Submission> submissions_;
  std::vector<Coalition> coalitions_;
  std::uint64_t noise_seed_ = 0;
};

/// Concatenation ordered by (owner ascending, original order). All inputs
/// must share the feature dimension; empty datasets are neutral.
Dataset dataset_union(std::span<const Dataset> parts);

/// Union of every submission except the excluded users.
Dataset leave_out(const MarketState& state, const std::set<UserId>& excluded);

/// CSV with header `owner,label,f0,...,f{m-1}`. Doubles round-trip exactly
/// (shortest form that parses back to the same bits).
void write_csv(const Dataset& data, std::ostream& out);
Dataset read_csv(std::istream& in);

void write_csv_file(const Dataset& data, const std::string& path);
Dataset read_csv_file(const std::string& path);

std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace privmarket
