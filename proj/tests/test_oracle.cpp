#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "privmarket/ingest.hpp"
#include "privmarket/oracle.hpp"
#include "privmarket/softmax.hpp"

using namespace privmarket;
using kernels::Exec;
using testutil::cluster_fixture;
using testutil::levels_market;
using testutil::make_record;

namespace {

MarketState two_user_market(double p1, double p2) {
  return levels_market({{1, p1}, {2, p2}});
}

}  // namespace

TEST_CASE("additive oracle sums discounted weights") {
  const auto oracle = AccuracyOracle::additive({{{1, 0.3}, {2, 0.2}}});
  const MarketState m = two_user_market(0, 0);
  CHECK(oracle.evaluate(m, m.users()) == 0.5);
  const MarketState noisy = two_user_market(2, 0);
  const UserId one = 1;
  CHECK(oracle.evaluate(noisy, {&one, 1}) ==
        doctest::Approx(0.1).epsilon(1e-12));
  CHECK(oracle.evaluate(m, {}) == 0.0);
}

TEST_CASE("additive oracle rejects weights that could hit the cap") {
  CHECK_THROWS_AS(AccuracyOracle::additive({{{1, 0.8}, {2, 0.5}}}),
                  ParameterError);
  CHECK_THROWS_AS(AccuracyOracle::additive({{{1, -0.1}}}), ParameterError);
}

TEST_CASE("diminishing oracle multiplies survival terms") {
  const auto oracle = AccuracyOracle::diminishing({{{1, 0.5}, {2, 0.5}}});
  const MarketState m = two_user_market(0, 0);
  CHECK(oracle.evaluate(m, m.users()) == 0.75);
  const UserId one = 1;
  CHECK(oracle.evaluate(m, {&one, 1}) == 0.5);
  CHECK(oracle.evaluate(m, {}) == 0.0);
}

TEST_CASE("harm oracle crosses into negative contributions") {
  SyntheticParams params;
  params.weights = {{1, 0.2}};
  params.base = 0.5;
  params.harm_threshold = 8.0;
  const auto oracle = AccuracyOracle::harm(params);
  const UserId one = 1;
  CHECK(oracle.evaluate(levels_market({{1, 16.0}}), {&one, 1}) == 0.3);
  CHECK(oracle.evaluate(levels_market({{1, 0.0}}), {&one, 1}) == 0.7);
  CHECK(oracle.evaluate(levels_market({{1, 0.0}}), {}) == 0.5);
  CHECK_THROWS_AS(
      AccuracyOracle::harm({{{1, 0.2}}, 0.5, 0.0}), ParameterError);
}

TEST_CASE("evaluate requires known users") {
  const auto oracle = AccuracyOracle::additive({{{1, 0.3}}});
  const MarketState m = levels_market({{1, 0.0}});
  const UserId ghost = 9;
  CHECK_THROWS_AS(oracle.evaluate(m, {&ghost, 1}), LookupError);
}

TEST_CASE("evaluate stays within [0,1] for random synthetic inputs") {
  rng::SplitMix64 g(404);
  for (int trial = 0; trial < 200; ++trial) {
    std::map<UserId, double> weights;
    std::map<UserId, double> levels;
    const std::size_t n = 1 + g.next_below(5);
    double budget = 1.0;
    for (UserId u = 1; u <= n; ++u) {
      const double w = budget * g.next_unit();
      weights[u] = w;
      budget -= w;
      levels[u] = 20.0 * g.next_unit();
    }
    const MarketState m = levels_market(levels);
    std::vector<UserId> subset;
    for (UserId u = 1; u <= n; ++u) {
      if (g.next() & 1) subset.push_back(u);
    }
    SyntheticParams params;
    params.weights = weights;
    params.base = g.next_unit();
    params.harm_threshold = 0.5 + 4.0 * g.next_unit();
    for (const auto& oracle :
         {AccuracyOracle::additive({weights}), AccuracyOracle::diminishing({weights}),
          AccuracyOracle::harm(params)}) {
      const double f = oracle.evaluate(m, subset);
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
    }
  }
}

TEST_CASE("additive marginal gain is the discounted weight") {
  rng::SplitMix64 g(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::map<UserId, double> weights{{1, 0.25}, {2, 0.25}, {3, 0.25}};
    std::map<UserId, double> levels{
        {1, 4.0 * g.next_unit()}, {2, 4.0 * g.next_unit()}, {3, 0.0}};
    const auto oracle = AccuracyOracle::additive({weights});
    const MarketState m = levels_market(levels);
    const std::vector<UserId> without{1, 2};
    const std::vector<UserId> with{1, 2, 3};
    CHECK(oracle.evaluate(m, with) - oracle.evaluate(m, without) ==
          doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("synthetic accuracy never improves when a level rises") {
  rng::SplitMix64 g(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::map<UserId, double> weights{
        {1, 0.4 * g.next_unit()}, {2, 0.4 * g.next_unit()}};
    const double base_p = 8.0 * g.next_unit();
    const double raised_p = base_p + 4.0 * g.next_unit();
    const auto oracles = {AccuracyOracle::additive({weights}),
                          AccuracyOracle::diminishing({weights})};
    for (const auto& oracle : oracles) {
      const MarketState lo = two_user_market(base_p, 1.0);
      const MarketState hi = two_user_market(raised_p, 1.0);
      CHECK(oracle.evaluate(lo, lo.users()) >=
            oracle.evaluate(hi, hi.users()));
    }
  }
}

// ---------------------------------------------------------------------------
// Classifier kind

namespace {

/// Independent check on the separable fixture: classify by nearest class
/// centroid computed straight from the data.
double centroid_accuracy(const Dataset& train, const Dataset& test) {
  std::map<std::int32_t, std::vector<double>> centroids;
  std::map<std::int32_t, double> counts;
  for (const Record& r : train.records()) {
    auto& c = centroids[r.label];
    c.resize(train.dim(), 0.0);
    for (std::size_t j = 0; j < train.dim(); ++j) c[j] += r.features[j];
    counts[r.label] += 1.0;
  }
  for (auto& [label, c] : centroids) {
    for (double& v : c) v /= counts[label];
  }
  std::size_t correct = 0;
  for (const Record& r : test.records()) {
    double best = 1e300;
    std::int32_t best_label = 0;
    for (const auto& [label, c] : centroids) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < test.dim(); ++j) {
        const double d = r.features[j] - c[j];
        d2 += d * d;
      }
      if (d2 < best) {
        best = d2;
        best_label = label;
      }
    }
    correct += best_label == r.label;
  }
  return double(correct) / double(test.size());
}

Dataset separable_fixture() {
  return cluster_fixture({{1, 40}, {2, 40}}, /*classes=*/2, /*dim=*/4,
                         /*separation=*/6.0, /*seed=*/21);
}

}  // namespace

TEST_CASE("softmax separates well-separated clusters") {
  const Dataset d = separable_fixture();
  const SoftmaxModel model = train_classifier(d);
  CHECK(model_accuracy(model, d) >= 0.95);
  CHECK(centroid_accuracy(d, d) >= 0.95);  // independent separability check
}

TEST_CASE("duplicating every training record leaves the model unchanged") {
  const Dataset d = testutil::user_dataset(1, 40, 3, 2);
  std::vector<Record> doubled = d.records();
  doubled.insert(doubled.end(), d.records().begin(), d.records().end());
  const Dataset d2(std::move(doubled), d.dim());
  const SoftmaxModel a = train_classifier(d);
  const SoftmaxModel b = train_classifier(d2);
  CHECK(a.weights == b.weights);
  CHECK(a.mean == b.mean);
  CHECK(a.inv_std == b.inv_std);
}

TEST_CASE("training twice gives bit-identical models, serial or parallel") {
  const Dataset d = separable_fixture();
  const SoftmaxModel a = train_classifier(d, {}, Exec::Parallel);
  const SoftmaxModel b = train_classifier(d, {}, Exec::Parallel);
  const SoftmaxModel c = train_classifier(d, {}, Exec::Serial);
  CHECK(a.weights == b.weights);
  CHECK(a.weights == c.weights);
}

TEST_CASE("absent classes are never predicted") {
  std::vector<Record> rs;
  for (int i = 0; i < 10; ++i) {
    rs.push_back(make_record(1, i % 2, {double(i % 2), 1.0}));
  }
  const Dataset train(std::move(rs), 2);  // labels {0,1} only
  const SoftmaxModel model = train_classifier(train);
  for (double x : {-5.0, 0.0, 1.0, 5.0}) {
    const std::vector<double> probe{x, 1.0};
    const std::int32_t label = model.predict(probe);
    CHECK((label == 0 || label == 1));
  }
}

TEST_CASE("training rejects an empty dataset") {
  CHECK_THROWS_AS(train_classifier(Dataset{}), ParameterError);
}

TEST_CASE("analytic gradient matches central finite differences") {
  // 5-record fixture; relative max-norm error below 1e-5.
  const std::size_t rows = 5, cols = 4, classes = 3;
  rng::SplitMix64 g(3);
  std::vector<double> x(rows * cols);
  for (double& v : x) v = 2.0 * g.next_unit() - 1.0;
  for (std::size_t i = 0; i < rows; ++i) x[i * cols + cols - 1] = 1.0;
  std::vector<std::int32_t> y{0, 1, 2, 1, 0};
  std::vector<double> w(classes * cols);
  for (double& v : w) v = g.next_unit() - 0.5;

  std::vector<double> grad(classes * cols);
  softmax::loss_and_grad(x, y, rows, cols, classes, w, 1e-4, grad);

  std::vector<double> fd(classes * cols);
  std::vector<double> scratch(classes * cols);
  const double h = 1e-6;
  for (std::size_t e = 0; e < w.size(); ++e) {
    std::vector<double> wp = w, wm = w;
    wp[e] += h;
    wm[e] -= h;
    const double lp =
        softmax::loss_and_grad(x, y, rows, cols, classes, wp, 1e-4, scratch);
    const double lm =
        softmax::loss_and_grad(x, y, rows, cols, classes, wm, 1e-4, scratch);
    fd[e] = (lp - lm) / (2.0 * h);
  }
  double max_err = 0.0, max_ref = 0.0;
  for (std::size_t e = 0; e < w.size(); ++e) {
    max_err = std::max(max_err, std::abs(grad[e] - fd[e]));
    max_ref = std::max(max_ref, std::abs(fd[e]));
  }
  CHECK(max_err / std::max(max_ref, 1e-12) < 1e-5);
}

TEST_CASE("classifier oracle memoizes by subset signature") {
  const Dataset d = separable_fixture();
  const SplitResult parts = split(d, {0.3, 5});
  const auto oracle = AccuracyOracle::classifier(parts.test);

  MarketState::Builder b;
  std::map<UserId, std::vector<Record>> by_user;
  for (const Record& r : parts.train.records()) {
    by_user[r.owner.value].push_back(r);
  }
  for (auto& [user, rs] : by_user) {
    b.add(make_submission(user, Dataset(std::move(rs), d.dim()),
                          PrivacyLevel(0.0)));
  }
  const MarketState m = std::move(b).build();

  CHECK(oracle.evaluations() == 0);
  const double first = oracle.evaluate(m, m.users());
  CHECK(oracle.evaluations() == 1);
  const double second = oracle.evaluate(m, m.users());
  CHECK(oracle.evaluations() == 1);  // cache hit, no retraining
  CHECK(first == second);
  const UserId one = 1;
  oracle.evaluate(m, {&one, 1});
  CHECK(oracle.evaluations() == 2);
}

TEST_CASE("subset signatures are canonical") {
  const auto oracle = AccuracyOracle::additive({{{2, 0.1}, {3, 0.1}}});
  const MarketState m = levels_market({{2, 4.0}, {3, 8.0}});
  const std::vector<UserId> ab{2, 3};
  const std::vector<UserId> ba{3, 2};
  CHECK(oracle.subset_signature(m, ab) == oracle.subset_signature(m, ba));
  const MarketState other = levels_market({{2, 4.0}, {3, 9.0}});
  CHECK(oracle.subset_signature(m, ab) !=
        oracle.subset_signature(other, ab));
  const MarketState reseeded = levels_market({{2, 4.0}, {3, 8.0}}, 99);
  CHECK(oracle.subset_signature(m, ab) !=
        oracle.subset_signature(reseeded, ab));
}

TEST_CASE("classifier oracle empty-subset value is chance level") {
  const Dataset d = separable_fixture();
  const SplitResult parts = split(d, {0.3, 5});
  const auto oracle = AccuracyOracle::classifier(parts.test);
  CHECK(oracle.empty_value() == 0.5);  // two classes
  CHECK(oracle.default_epsilon() ==
        0.5 / static_cast<double>(parts.test.size()));
  CHECK_THROWS_AS(AccuracyOracle::classifier(Dataset{}), ConfigError);
}
