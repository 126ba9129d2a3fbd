#pragma once

#include <algorithm>
#include <cmath>

#include "banknet/tensor.hpp"

namespace testutil {

inline double max_abs_diff(const bnk::Tensor& a, const bnk::Tensor& b) {
  if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool bitwise_equal(const bnk::Tensor& a, const bnk::Tensor& b) {
  return a.shape() == b.shape() && a.values() == b.values();
}

}  // namespace testutil
