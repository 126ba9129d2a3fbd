#pragma once

// Central finite-difference gradient checker. The objective is re-evaluated
// from scratch for every +/-h probe, in double precision.

#include <cmath>
#include <functional>

#include "banknet/tensor.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-4;
inline constexpr double kTolerance = 1e-4;

struct Stats {
  double max_rel = 0.0;
  long checked = 0;

  bool ok() const { return max_rel < kTolerance; }
};

/// Perturbs every element of `arg` by +/-h and compares the central
/// difference of `objective()` against `analytic`. Near-zero pairs (both
/// below 1e-7 in magnitude) count as exact.
void check_against(bnk::Tensor& arg, const bnk::Tensor& analytic,
                   const std::function<double()>& objective, Stats& stats, double h = kStep);

/// sum(weight * t) -- the scalarizing objective used to exercise a full
/// Jacobian through a single backward call.
double weighted_sum(const bnk::Tensor& t, const bnk::Tensor& weight);

}  // namespace gradcheck
