#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "privmarket/core.hpp"

namespace privmarket {

/// One raw accelerometer sample.
struct RawSample {
  std::int64_t timestamp_ns = 0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Samples grouped per (user, activity) run, in file order.
struct RawSeries {
  std::map<std::pair<UserId, std::string>, std::vector<RawSample>> runs;
  std::size_t parsed_lines = 0;
  std::size_t malformed_lines = 0;
  std::vector<std::string> malformed_samples;  // up to a handful, for logs

  std::vector<UserId> users() const;
  std::vector<std::string> activities() const;  // sorted distinct
};

/// Parses `user,activity,timestamp,x,y,z` lines with an optional trailing
/// ';'. Blank lines are skipped. Malformed lines are counted and tolerated
/// up to 10% of the non-blank input; beyond that a FormatError carries a
/// few offending lines.
RawSeries parse_raw(std::istream& in);
RawSeries parse_raw_file(const std::string& path);

/// Frames each run into non-overlapping windows of `window_len` samples and
/// averages every `downsample` consecutive values per axis. Features are
/// laid out x-block, y-block, z-block, so M = 3 * window_len / downsample
/// (120 with the defaults). Labels are activity codes assigned by sorted
/// activity name; leftovers shorter than a window are dropped.
Dataset windowize(const RawSeries& series, int window_len = 200,
                  int downsample = 5);

/// Activity-name -> label-code mapping used by windowize.
std::map<std::string, std::int32_t> label_codes(const RawSeries& series);

struct SplitSpec {
  double test_fraction = 0.3;  // in (0,1)
  std::uint64_t seed = 0;
};

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::string> warnings;
};

/// Deterministic stratified split: every (owner, label) stratum is shuffled
/// by a stream keyed on (seed, owner, label) and contributes
/// round(test_fraction * size) records (at least one) to the test side.
/// Singleton strata go to train with a warning.
SplitResult split(const Dataset& data, const SplitSpec& spec);

}  // namespace privmarket
