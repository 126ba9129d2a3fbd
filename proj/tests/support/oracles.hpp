#pragma once

// Independent reference implementations used to check the library. Everything
// here is written as plain nested loops straight from the definitions and
// must stay decoupled from the optimized paths in core/.

#include <vector>

#include "banknet/rng.hpp"
#include "banknet/tensor.hpp"

namespace oracle {

using bnk::ConvGeometry;
using bnk::Tensor;

/// Six nested loops of direct summation, with its own padding arithmetic.
Tensor conv2d_direct(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     const ConvGeometry& geom);

Tensor depthwise_direct(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        const ConvGeometry& geom);

Tensor dense_direct(const Tensor& input, const Tensor& weights, const Tensor& bias);

Tensor avgpool_direct(const Tensor& input, const ConvGeometry& geom);
Tensor maxpool_direct(const Tensor& input, const ConvGeometry& geom);
Tensor global_avg_direct(const Tensor& input);

/// Unstabilized exp/sum softmax evaluated in long double.
std::vector<double> softmax_scalar(const std::vector<double>& logits);

double cross_entropy_scalar(const std::vector<double>& probs, const std::vector<double>& label);

double batchnorm_scalar(double x, double gamma, double beta, double mean, double var, double eps);

/// Uniform random tensor in [lo, hi].
Tensor random_tensor(const std::vector<int>& shape, bnk::SplitMix64& rng, double lo = -1.0,
                     double hi = 1.0);

/// Uniform random values whose magnitude stays in [margin, hi]; keeps
/// gradient checks away from activation kinks.
Tensor random_tensor_away_from_zero(const std::vector<int>& shape, bnk::SplitMix64& rng,
                                    double margin = 0.05, double hi = 1.0);

}  // namespace oracle
