#include "privmarket/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace privmarket {

namespace softmax {

namespace {

using kernels::DD;

// Cross-entropy and gradient contribution of records [begin, end) against
// per-entry compensated accumulators.
void accumulate_block(std::span<const double> x,
                      std::span<const std::int32_t> y, std::size_t cols,
                      std::size_t classes, std::span<const double> weights,
                      std::size_t begin, std::size_t end, DD* grad_acc,
                      DD& loss_acc, std::vector<double>& probs) {
  for (std::size_t i = begin; i < end; ++i) {
    const double* xi = x.data() + i * cols;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < classes; ++k) {
      const double* wk = weights.data() + k * cols;
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += wk[j] * xi[j];
      probs[k] = s;
      max_logit = std::max(max_logit, s);
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      probs[k] = std::exp(probs[k] - max_logit);
      denom += probs[k];
    }
    const double inv_denom = 1.0 / denom;
    const auto target = static_cast<std::size_t>(y[i]);
    loss_acc.add(-std::log(probs[target] * inv_denom));
    for (std::size_t k = 0; k < classes; ++k) {
      const double delta =
          probs[k] * inv_denom - (k == target ? 1.0 : 0.0);
      DD* gk = grad_acc + k * cols;
      for (std::size_t j = 0; j < cols; ++j) gk[j].add(delta * xi[j]);
    }
  }
}

}  // namespace

double loss_and_grad(std::span<const double> x,
                     std::span<const std::int32_t> y, std::size_t rows,
                     std::size_t cols, std::size_t classes,
                     std::span<const double> weights, double l2,
                     std::span<double> grad, kernels::Exec exec) {
  const std::size_t entries = classes * cols;
  const std::size_t blocks = kernels::block_count(rows);
  std::vector<DD> partials(blocks * entries);
  std::vector<DD> loss_partials(blocks);

  if (exec == kernels::Exec::Serial) {
    std::vector<double> probs(classes);
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t begin = b * kernels::kBlock;
      const std::size_t end = std::min(rows, begin + kernels::kBlock);
      accumulate_block(x, y, cols, classes, weights, begin, end,
                       partials.data() + b * entries, loss_partials[b],
                       probs);
    }
  } else {
    const std::int64_t nblocks = static_cast<std::int64_t>(blocks);
#pragma omp parallel
    {
      std::vector<double> probs(classes);
#pragma omp for schedule(static)
      for (std::int64_t b = 0; b < nblocks; ++b) {
        const std::size_t begin = static_cast<std::size_t>(b) * kernels::kBlock;
        const std::size_t end = std::min(rows, begin + kernels::kBlock);
        accumulate_block(x, y, cols, classes, weights, begin, end,
                         partials.data() + b * entries,
                         loss_partials[static_cast<std::size_t>(b)], probs);
      }
    }
  }

  // Block partials merge in block order regardless of scheduling.
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t e = 0; e < entries; ++e) {
    DD total;
    for (std::size_t b = 0; b < blocks; ++b) {
      total.merge(partials[b * entries + e]);
    }
    grad[e] = total.value() * inv_rows + l2 * weights[e];
  }
  DD loss_total;
  for (std::size_t b = 0; b < blocks; ++b) loss_total.merge(loss_partials[b]);

  DD w2;
  for (std::size_t e = 0; e < entries; ++e) w2.add(weights[e] * weights[e]);
  return loss_total.value() * inv_rows + 0.5 * l2 * w2.value();
}

}  // namespace softmax

namespace {

using kernels::DD;

// Population mean and std per feature, compensated so repeated data
// standardizes identically to the original.
void fit_standardizer(const Dataset& train, std::vector<double>& mean,
                      std::vector<double>& inv_std) {
  const std::size_t dim = train.dim();
  const std::size_t n = train.size();
  mean.assign(dim, 0.0);
  inv_std.assign(dim, 0.0);
  std::vector<DD> sums(dim);
  for (const Record& r : train.records()) {
    for (std::size_t j = 0; j < dim; ++j) sums[j].add(r.features[j]);
  }
  for (std::size_t j = 0; j < dim; ++j) {
    mean[j] = sums[j].value() / static_cast<double>(n);
  }
  std::vector<DD> sq(dim);
  for (const Record& r : train.records()) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = r.features[j] - mean[j];
      sq[j].add(d * d);
    }
  }
  for (std::size_t j = 0; j < dim; ++j) {
    const double sd = std::sqrt(sq[j].value() / static_cast<double>(n));
    inv_std[j] = 1.0 / std::max(sd, 1e-8);
  }
}

}  // namespace

SoftmaxModel train_classifier(const Dataset& train,
                              const ClassifierParams& params,
                              kernels::Exec exec) {
  if (train.empty()) {
    throw ParameterError("cannot train a classifier on an empty dataset");
  }
  SoftmaxModel model;
  model.dim = train.dim();
  model.classes = train.label_set();
  fit_standardizer(train, model.mean, model.inv_std);

  const std::size_t cols = model.dim + 1;
  const std::size_t rows = train.size();
  const std::size_t classes = model.classes.size();

  std::vector<double> x(rows * cols);
  std::vector<std::int32_t> y(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const Record& r = train.records()[i];
    double* xi = x.data() + i * cols;
    for (std::size_t j = 0; j < model.dim; ++j) {
      xi[j] = (r.features[j] - model.mean[j]) * model.inv_std[j];
    }
    xi[model.dim] = 1.0;
    const auto it = std::lower_bound(model.classes.begin(),
                                     model.classes.end(), r.label);
    y[i] = static_cast<std::int32_t>(it - model.classes.begin());
  }

  model.weights.assign(classes * cols, 0.0);
  std::vector<double> grad(classes * cols);
  for (int iter = 0; iter < params.iterations; ++iter) {
    softmax::loss_and_grad(x, y, rows, cols, classes, model.weights,
                           params.l2, grad, exec);
    for (std::size_t e = 0; e < model.weights.size(); ++e) {
      model.weights[e] -= params.step * grad[e];
    }
  }
  return model;
}

std::int32_t SoftmaxModel::predict(std::span<const double> features) const {
  const std::size_t cols = dim + 1;
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const double* wk = weights.data() + k * cols;
    double s = wk[dim];  // bias
    for (std::size_t j = 0; j < dim; ++j) {
      s += wk[j] * (features[j] - mean[j]) * inv_std[j];
    }
    if (s > best_score) {
      best_score = s;
      best = k;
    }
  }
  return classes[best];
}

double model_accuracy(const SoftmaxModel& model, const Dataset& test) {
  if (test.empty()) {
    throw ParameterError("accuracy undefined on an empty test set");
  }
  std::size_t correct = 0;
  for (const Record& r : test.records()) {
    if (model.predict(r.features) == r.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace privmarket
