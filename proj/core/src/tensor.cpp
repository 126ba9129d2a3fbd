#include "banknet/tensor.hpp"

#include <cmath>
#include <utility>

namespace bnk {

std::string shape_str(const std::vector<int>& shape) {
  if (shape.empty()) return "scalar";
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(shape_size(shape_), 0.0);
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  for (double& v : t.data_) v = value;
  return t;
}

Tensor Tensor::of(std::vector<int> shape, std::vector<double> values) {
  if (values.size() != shape_size(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not fill shape " + bnk::shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {
[[noreturn]] void bad_rank(const std::vector<int>& shape, int wanted) {
  throw ShapeError("rank-" + std::to_string(wanted) + " access into tensor of shape " +
                   shape_str(shape));
}
}  // namespace

std::size_t Tensor::index1(int i) const {
  if (shape_.size() != 1) bad_rank(shape_, 1);
  return static_cast<std::size_t>(i);
}

std::size_t Tensor::index2(int i, int j) const {
  if (shape_.size() != 2) bad_rank(shape_, 2);
  return static_cast<std::size_t>(i) * shape_[1] + j;
}

std::size_t Tensor::index3(int i, int j, int k) const {
  if (shape_.size() != 3) bad_rank(shape_, 3);
  return (static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k;
}

std::size_t Tensor::index4(int i, int j, int k, int l) const {
  if (shape_.size() != 4) bad_rank(shape_, 4);
  return ((static_cast<std::size_t>(i) * shape_[1] + j) * static_cast<std::size_t>(shape_[2]) + k) *
             shape_[3] +
         l;
}

int conv_out_extent(int in, int kernel, int stride, Padding padding) {
  if (in <= 0 || kernel <= 0 || stride <= 0) {
    throw ShapeError("invalid geometry: in=" + std::to_string(in) + " kernel=" +
                     std::to_string(kernel) + " stride=" + std::to_string(stride));
  }
  if (padding == Padding::same) {
    return (in + stride - 1) / stride;
  }
  if (in < kernel) {
    throw ShapeError("valid geometry gives non-positive output: input extent " +
                     std::to_string(in) + " < kernel " + std::to_string(kernel));
  }
  return (in - kernel) / stride + 1;
}

PadOffsets pad_offsets(int in_h, int in_w, const ConvGeometry& g, int out_h, int out_w) {
  PadOffsets p;
  if (g.padding == Padding::same) {
    const int total_h = std::max((out_h - 1) * g.stride + g.kernel_h - in_h, 0);
    const int total_w = std::max((out_w - 1) * g.stride + g.kernel_w - in_w, 0);
    p.top = total_h / 2;
    p.left = total_w / 2;
  }
  return p;
}

}  // namespace bnk
