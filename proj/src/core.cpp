#include "privmarket/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <utility>

namespace privmarket {

std::string to_string(OwnerId id) {
  const char prefix = id.kind == OwnerKind::User ? 'u' : 'c';
  return prefix + std::to_string(id.value);
}

OwnerId parse_owner(std::string_view text) {
  if (text.empty()) throw FormatError("empty owner field");
  OwnerKind kind = OwnerKind::User;
  std::string_view digits = text;
  if (text.front() == 'u' || text.front() == 'c') {
    kind = text.front() == 'u' ? OwnerKind::User : OwnerKind::Coalition;
    digits = text.substr(1);
  }
  std::uint32_t value = 0;
  const auto [ptr, ec] =
      std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
    throw FormatError("bad owner field: '" + std::string(text) + "'");
  }
  return {kind, value};
}

Dataset::Dataset(std::vector<Record> records, std::size_t dim)
    : records_(std::move(records)), dim_(dim) {
  std::set<std::int32_t> labels;
  for (const Record& r : records_) {
    if (r.features.size() != dim_) {
      throw StructuralError("record dimension " +
                            std::to_string(r.features.size()) +
                            " does not match dataset dimension " +
                            std::to_string(dim_));
    }
    labels.insert(r.label);
  }
  label_set_.assign(labels.begin(), labels.end());
}

PrivacyLevel::PrivacyLevel(double p) : p_(p) {
  if (!(p >= 0.0) || !std::isfinite(p)) {
    throw ParameterError("privacy level must be finite and >= 0, got " +
                         std::to_string(p));
  }
}

Submission make_submission(UserId owner, Dataset data, PrivacyLevel privacy) {
  const OwnerId tag = OwnerId::user(owner);
  for (const Record& r : data.records()) {
    if (r.owner != tag) {
      throw StructuralError("submission of user " + std::to_string(owner) +
                            " contains a record owned by " +
                            to_string(r.owner));
    }
  }
  Submission s;
  s.owner = tag;
  s.data = std::move(data);
  s.privacy = privacy;
  s.member_levels = {{owner, privacy}};
  return s;
}

MarketState::Builder& MarketState::Builder::noise_seed(std::uint64_t seed) {
  noise_seed_ = seed;
  return *this;
}

MarketState::Builder& MarketState::Builder::add(Submission submission) {
  if (submission.owner.kind != OwnerKind::User) {
    throw StructuralError(
        "market submissions are per-user; coalition identities are "
        "registered separately");
  }
  const UserId id = submission.owner.value;
  if (submissions_.contains(id)) {
    throw StructuralError("duplicate submission for user " +
                          std::to_string(id));
  }
  submissions_.emplace(id, std::move(submission));
  return *this;
}

MarketState::Builder& MarketState::Builder::add_coalition(
    CoalitionId id, std::vector<UserId> members) {
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  if (members.empty()) {
    throw ParameterError("coalition " + std::to_string(id) +
                         " must have at least one member");
  }
  for (const Coalition& c : coalitions_) {
    if (c.id == id) {
      throw StructuralError("duplicate coalition id " + std::to_string(id));
    }
    for (UserId m : members) {
      if (std::binary_search(c.members.begin(), c.members.end(), m)) {
        throw StructuralError("user " + std::to_string(m) +
                              " already belongs to coalition " +
                              std::to_string(c.id));
      }
    }
  }
  for (UserId m : members) {
    if (!submissions_.contains(m)) {
      throw LookupError("coalition member " + std::to_string(m) +
                        " has no submission");
    }
  }
  coalitions_.push_back({id, std::move(members)});
  return *this;
}

MarketState MarketState::Builder::build() && {
  MarketState state;
  state.submissions_ = std::move(submissions_);
  state.coalitions_ = std::move(coalitions_);
  state.noise_seed_ = noise_seed_;
  return state;
}

std::vector<UserId> MarketState::users() const {
  std::vector<UserId> ids;
  ids.reserve(submissions_.size());
  for (const auto& [id, sub] : submissions_) ids.push_back(id);
  return ids;
}

const Submission& MarketState::submission(UserId id) const {
  const auto it = submissions_.find(id);
  if (it == submissions_.end()) {
    throw LookupError("unknown user " + std::to_string(id));
  }
  return it->second;
}

const Coalition& MarketState::coalition(CoalitionId id) const {
  for (const Coalition& c : coalitions_) {
    if (c.id == id) return c;
  }
  throw LookupError("unknown coalition " + std::to_string(id));
}

Dataset MarketState::full_union() const {
  return leave_out(*this, {});
}

MarketState MarketState::without_user(UserId id) const {
  if (!submissions_.contains(id)) {
    throw LookupError("unknown user " + std::to_string(id));
  }
  MarketState out;
  out.noise_seed_ = noise_seed_;
  out.submissions_ = submissions_;
  out.submissions_.erase(id);
  for (Coalition c : coalitions_) {
    std::erase(c.members, id);
    if (!c.members.empty()) out.coalitions_.push_back(std::move(c));
  }
  return out;
}

MarketState MarketState::with_submission(Submission submission) const {
  if (submission.owner.kind != OwnerKind::User) {
    throw StructuralError(
        "market submissions are per-user; coalition identities are "
        "registered separately");
  }
  MarketState out = *this;
  out.submissions_.insert_or_assign(submission.owner.value,
                                    std::move(submission));
  return out;
}

MarketState MarketState::with_coalition(CoalitionId id,
                                        std::vector<UserId> members) const {
  MarketState out = *this;
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  if (members.empty()) {
    throw ParameterError("coalition " + std::to_string(id) +
                         " must have at least one member");
  }
  for (const Coalition& c : out.coalitions_) {
    if (c.id == id) {
      throw StructuralError("duplicate coalition id " + std::to_string(id));
    }
    for (UserId m : members) {
      if (std::binary_search(c.members.begin(), c.members.end(), m)) {
        throw StructuralError("user " + std::to_string(m) +
                              " already belongs to coalition " +
                              std::to_string(c.id));
      }
    }
  }
  for (UserId m : members) {
    if (!out.submissions_.contains(m)) {
      throw LookupError("coalition member " + std::to_string(m) +
                        " has no submission");
    }
  }
  out.coalitions_.push_back({id, std::move(members)});
  return out;
}

namespace {

std::size_t common_dim(std::span<const Dataset> parts) {
  std::size_t dim = 0;
  bool seen = false;
  for (const Dataset& d : parts) {
    if (d.empty() && d.dim() == 0) continue;
    if (!seen) {
      dim = d.dim();
      seen = true;
    } else if (d.dim() != dim) {
      throw StructuralError("dataset dimension mismatch: " +
                            std::to_string(d.dim()) + " vs " +
                            std::to_string(dim));
    }
  }
  return dim;
}

}  // namespace

Dataset dataset_union(std::span<const Dataset> parts) {
  const std::size_t dim = common_dim(parts);
  std::vector<Record> all;
  std::size_t total = 0;
  for (const Dataset& d : parts) total += d.size();
  all.reserve(total);
  for (const Dataset& d : parts) {
    all.insert(all.end(), d.records().begin(), d.records().end());
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Record& a, const Record& b) {
                     return a.owner < b.owner;
                   });
  return Dataset(std::move(all), dim);
}

Dataset leave_out(const MarketState& state, const std::set<UserId>& excluded) {
  for (UserId id : excluded) {
    if (!state.has_user(id)) {
      throw LookupError("unknown user " + std::to_string(id));
    }
  }
  std::vector<Dataset> kept;
  kept.reserve(state.submissions().size());
  for (const auto& [id, sub] : state.submissions()) {
    if (!excluded.contains(id)) kept.push_back(sub.data);
  }
  return dataset_union(kept);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw FormatError("bad numeric field: '" + std::string(text) + "'");
  }
  return v;
}

namespace {

std::int64_t parse_int(std::string_view text) {
  std::int64_t v = 0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw FormatError("bad integer field: '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

void write_csv(const Dataset& data, std::ostream& out) {
  out << "owner,label";
  for (std::size_t j = 0; j < data.dim(); ++j) out << ",f" << j;
  out << '\n';
  for (const Record& r : data.records()) {
    out << to_string(r.owner) << ',' << r.label;
    for (double v : r.features) out << ',' << format_double(v);
    out << '\n';
  }
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split_fields(strip_cr(line));
  if (header.size() < 2 || header[0] != "owner" || header[1] != "label") {
    throw FormatError("dataset CSV must start with 'owner,label,...'");
  }
  const std::size_t dim = header.size() - 2;
  std::vector<Record> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = strip_cr(line);
    if (text.empty()) continue;
    const auto fields = split_fields(text);
    if (fields.size() != dim + 2) {
      throw FormatError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(dim + 2) + " fields, got " +
                        std::to_string(fields.size()));
    }
    Record r;
    r.owner = parse_owner(fields[0]);
    r.label = static_cast<std::int32_t>(parse_int(fields[1]));
    r.features.reserve(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      r.features.push_back(parse_double(fields[j + 2]));
    }
    records.push_back(std::move(r));
  }
  return Dataset(std::move(records), dim);
}

void write_csv_file(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_csv(data, out);
  if (!out.good()) throw IoError("write failed: " + path);
}

Dataset read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return read_csv(in);
}

}  // namespace privmarket
