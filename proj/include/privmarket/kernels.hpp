#pragma once

#include <cstddef>

namespace privmarket::kernels {

/// Execution policy for the hot loops. Parallel paths are OpenMP and must
/// produce bit-identical results to Serial for any thread count: work is
/// split into fixed blocks whose partials are reduced in block order.
enum class Exec { Serial, Parallel };

/// Records per reduction block. Fixed so the summation tree does not
/// depend on the thread count.
inline constexpr std::size_t kBlock = 256;

/// Compensated accumulator (TwoSum). Roughly 106 significant bits, so
/// block-wise sums round to the same double as a flat exact sum in
/// practice; repeated data accumulates to the same mean it had alone.
struct DD {
  double hi = 0.0;
  double lo = 0.0;

  void add(double x) {
    const double t = hi + x;
    const double b = t - hi;
    lo += (hi - (t - b)) + (x - b);
    hi = t;
  }

  void merge(const DD& other) {
    add(other.hi);
    lo += other.lo;
  }

  double value() const { return hi + lo; }
};

inline std::size_t block_count(std::size_t n) {
  return (n + kBlock - 1) / kBlock;
}

}  // namespace privmarket::kernels
