#include "privmarket/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "privmarket/rng.hpp"

namespace privmarket {

std::vector<UserId> RawSeries::users() const {
  std::set<UserId> ids;
  for (const auto& [key, samples] : runs) ids.insert(key.first);
  return {ids.begin(), ids.end()};
}

std::vector<std::string> RawSeries::activities() const {
  std::set<std::string> names;
  for (const auto& [key, samples] : runs) names.insert(key.second);
  return {names.begin(), names.end()};
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  return s;
}

template <typename T>
bool parse_num(std::string_view text, T& out) {
  text = trim(text);
  if (text.empty()) return false;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

bool parse_line(std::string_view line, UserId& user, std::string& activity,
                RawSample& sample) {
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
  if (fields.size() != 6) return false;
  if (!parse_num(fields[0], user)) return false;
  const std::string_view name = trim(fields[1]);
  if (name.empty()) return false;
  if (!parse_num(fields[2], sample.timestamp_ns)) return false;
  if (!parse_num(fields[3], sample.x)) return false;
  if (!parse_num(fields[4], sample.y)) return false;
  std::string_view zfield = trim(fields[5]);
  if (!zfield.empty() && zfield.back() == ';') zfield.remove_suffix(1);
  if (!parse_num(zfield, sample.z)) return false;
  activity.assign(name);
  return true;
}

}  // namespace

RawSeries parse_raw(std::istream& in) {
  RawSeries series;
  std::string line;
  std::string activity;
  std::size_t considered = 0;
  while (std::getline(in, line)) {
    const std::string_view text = trim(line);
    if (text.empty()) continue;
    ++considered;
    UserId user = 0;
    RawSample sample;
    if (parse_line(text, user, activity, sample)) {
      series.runs[{user, activity}].push_back(sample);
      ++series.parsed_lines;
    } else {
      ++series.malformed_lines;
      if (series.malformed_samples.size() < 5) {
        series.malformed_samples.emplace_back(text);
      }
    }
  }
  if (considered > 0 &&
      static_cast<double>(series.malformed_lines) > 0.10 * considered) {
    std::ostringstream msg;
    msg << series.malformed_lines << " of " << considered
        << " lines malformed (>10%); samples:";
    for (const std::string& s : series.malformed_samples) msg << "\n  " << s;
    throw FormatError(msg.str());
  }
  return series;
}

RawSeries parse_raw_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return parse_raw(in);
}

std::map<std::string, std::int32_t> label_codes(const RawSeries& series) {
  std::map<std::string, std::int32_t> codes;
  std::int32_t next = 0;
  for (const std::string& name : series.activities()) codes[name] = next++;
  return codes;
}

Dataset windowize(const RawSeries& series, int window_len, int downsample) {
  if (window_len <= 0) {
    throw ParameterError("window length must be positive");
  }
  if (downsample <= 0 || window_len % downsample != 0) {
    throw ParameterError("window length must be divisible by the "
                         "downsample factor");
  }
  const std::size_t per_axis =
      static_cast<std::size_t>(window_len / downsample);
  const std::size_t dim = 3 * per_axis;
  const auto codes = label_codes(series);

  std::vector<Record> records;
  for (const auto& [key, samples] : series.runs) {
    const auto& [user, activity] = key;
    const std::size_t windows = samples.size() / window_len;
    for (std::size_t w = 0; w < windows; ++w) {
      const RawSample* base = samples.data() + w * window_len;
      Record r;
      r.owner = OwnerId::user(user);
      r.label = codes.at(activity);
      r.features.resize(dim);
      for (std::size_t g = 0; g < per_axis; ++g) {
        double sx = 0.0, sy = 0.0, sz = 0.0;
        for (int k = 0; k < downsample; ++k) {
          const RawSample& s = base[g * downsample + k];
          sx += s.x;
          sy += s.y;
          sz += s.z;
        }
        r.features[g] = sx / downsample;
        r.features[per_axis + g] = sy / downsample;
        r.features[2 * per_axis + g] = sz / downsample;
      }
      records.push_back(std::move(r));
    }
  }
  return Dataset(std::move(records), dim);
}

SplitResult split(const Dataset& data, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw ParameterError("test fraction must lie in (0,1)");
  }
  // Strata in (owner, label) order; map iteration keeps this deterministic.
  std::map<std::pair<OwnerId, std::int32_t>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Record& r = data.records()[i];
    strata[{r.owner, r.label}].push_back(i);
  }

  SplitResult result;
  std::vector<bool> to_test(data.size(), false);
  for (auto& [key, indices] : strata) {
    if (indices.size() == 1) {
      result.warnings.push_back(
          "stratum (" + to_string(key.first) + ", " +
          std::to_string(key.second) + ") has a single record; kept in train");
      continue;
    }
    rng::SplitMix64 g(
        rng::derive(spec.seed, {key.first.key(),
                                static_cast<std::uint64_t>(
                                    static_cast<std::uint32_t>(key.second))}));
    for (std::size_t i = indices.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(g.next_below(i));
      std::swap(indices[i - 1], indices[j]);
    }
    const auto take = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::llround(spec.test_fraction *
                            static_cast<double>(indices.size()))));
    for (std::size_t i = 0; i < take && i < indices.size(); ++i) {
      to_test[indices[i]] = true;
    }
  }

  std::vector<Record> train, test;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (to_test[i] ? test : train).push_back(data.records()[i]);
  }
  result.train = Dataset(std::move(train), data.dim());
  result.test = Dataset(std::move(test), data.dim());
  return result;
}

}  // namespace privmarket
