#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "privmarket/core.hpp"
#include "privmarket/kernels.hpp"

namespace privmarket {

/// Full-batch gradient descent settings. The defaults are part of the
/// accuracy function's contract: changing them changes every payoff.
struct ClassifierParams {
  int iterations = 300;
  double step = 0.1;
  double l2 = 1e-4;

  friend bool operator==(const ClassifierParams&,
                         const ClassifierParams&) = default;
};

/// Multinomial linear classifier over standardized features. Only classes
/// seen in training exist in the model, so absent classes are never
/// predicted.
struct SoftmaxModel {
  std::size_t dim = 0;                    // raw feature dimension
  std::vector<std::int32_t> classes;      // sorted labels present in train
  std::vector<double> mean;               // dim
  std::vector<double> inv_std;            // dim, std floored at 1e-8
  std::vector<double> weights;            // classes x (dim+1), bias last

  std::int32_t predict(std::span<const double> features) const;
};

/// Deterministic training: standardize by train mean/std, start from zero
/// weights, run fixed-step full-batch gradient descent. Serial and
/// parallel execution produce bit-identical models.
SoftmaxModel train_classifier(const Dataset& train,
                              const ClassifierParams& params = {},
                              kernels::Exec exec = kernels::Exec::Parallel);

/// Fraction of test records predicted correctly.
double model_accuracy(const SoftmaxModel& model, const Dataset& test);

namespace softmax {

/// Mean cross-entropy plus 0.5*l2*||W||^2 over a row-major design matrix
/// (rows x cols, bias column included by the caller); writes the analytic
/// gradient. Blocked compensated accumulation keeps the result independent
/// of the thread count.
double loss_and_grad(std::span<const double> x, std::span<const std::int32_t> y,
                     std::size_t rows, std::size_t cols, std::size_t classes,
                     std::span<const double> weights, double l2,
                     std::span<double> grad,
                     kernels::Exec exec = kernels::Exec::Parallel);

}  // namespace softmax

}  // namespace privmarket
