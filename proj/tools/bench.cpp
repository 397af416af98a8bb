// Compares the serial reference kernels against the OpenMP paths and
// verifies that both produce identical bits.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "privmarket/anonymize.hpp"
#include "privmarket/mechanism.hpp"
#include "privmarket/rng.hpp"
#include "privmarket/softmax.hpp"

namespace {

using namespace privmarket;
using kernels::Exec;

double seconds(const std::chrono::steady_clock::time_point& from) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - from)
      .count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, seconds(start));
  }
  return best;
}

void row(const char* name, double serial, double parallel, bool identical) {
  std::printf("%-24s %10.4fs %10.4fs %8.2fx   %s\n", name, serial, parallel,
              serial / parallel, identical ? "bit-identical" : "MISMATCH");
}

Dataset synthetic_dataset(std::size_t records, std::size_t dim) {
  rng::SplitMix64 g(7);
  std::vector<Record> rs;
  rs.reserve(records);
  for (std::size_t i = 0; i < records; ++i) {
    Record r;
    r.owner = OwnerId::user(static_cast<UserId>(i % 8 + 1));
    r.label = static_cast<std::int32_t>(i % 4);
    r.features.resize(dim);
    for (double& f : r.features) f = 2.0 * g.next_unit() - 1.0 + r.label;
    rs.push_back(std::move(r));
  }
  return Dataset(std::move(rs), dim);
}

void bench_noise() {
  const Dataset data = synthetic_dataset(20000, 120);
  const GaussianNoiseSpec spec{PrivacyLevel(4.0), 11};
  Dataset out_serial, out_parallel;
  const double ts =
      time_best_of(3, [&] { out_serial = anonymize(data, spec, Exec::Serial); });
  const double tp = time_best_of(
      3, [&] { out_parallel = anonymize(data, spec, Exec::Parallel); });
  bool same = out_serial.size() == out_parallel.size();
  for (std::size_t i = 0; same && i < out_serial.size(); ++i) {
    same = out_serial.records()[i].features ==
           out_parallel.records()[i].features;
  }
  row("gaussian noise", ts, tp, same);
}

void bench_training() {
  const Dataset data = synthetic_dataset(4000, 60);
  ClassifierParams params;
  params.iterations = 50;
  SoftmaxModel serial, parallel;
  const double ts = time_best_of(
      2, [&] { serial = train_classifier(data, params, Exec::Serial); });
  const double tp = time_best_of(
      2, [&] { parallel = train_classifier(data, params, Exec::Parallel); });
  row("softmax training", ts, tp, serial.weights == parallel.weights);
}

void bench_shapley_mc() {
  SyntheticParams params;
  std::vector<UserId> members;
  for (UserId u = 1; u <= 8; ++u) {
    params.weights[u] = 0.05 + 0.01 * u;
    members.push_back(u);
  }
  MarketState::Builder builder;
  builder.noise_seed(3);
  for (UserId u = 1; u <= 8; ++u) {
    builder.add(make_submission(u, Dataset{}, PrivacyLevel(u % 3)));
  }
  const MarketState market =
      std::move(builder).build().with_coalition(1, members);
  const AccuracyOracle oracle = AccuracyOracle::diminishing(params);
  const CharacteristicFunction v(market, oracle, 1);

  ShapleyResult serial, parallel;
  const double ts = time_best_of(
      3, [&] { serial = shapley_monte_carlo(v, 200000, 5, Exec::Serial); });
  const double tp = time_best_of(
      3, [&] { parallel = shapley_monte_carlo(v, 200000, 5, Exec::Parallel); });
  row("shapley monte carlo", ts, tp,
      serial.allocations == parallel.allocations &&
          serial.standard_error == parallel.standard_error);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: disabled (serial build)\n");
#endif
  std::printf("%-24s %11s %11s %9s\n", "kernel", "serial", "parallel",
              "speedup");
  bench_noise();
  bench_training();
  bench_shapley_mc();
  return 0;
}
