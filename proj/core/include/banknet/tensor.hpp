#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnk {

// Error categories. The CLI maps each one to a distinct exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched tensor shapes or impossible convolution geometry.
struct ShapeError : Error {
  using Error::Error;
};

// Dataset ingestion problems: missing directories, empty classes, bad files.
struct DataError : Error {
  using Error::Error;
};

// Weight-file problems, split by what the reader detected.
struct WeightError : Error {
  enum class Kind { open_failed, bad_magic, bad_version, truncated, bad_checksum, shape_mismatch };
  WeightError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
  Kind kind;
};

// Non-finite values where the training loop requires finite ones.
struct NumericError : Error {
  using Error::Error;
};

std::string shape_str(const std::vector<int>& shape);
std::size_t shape_size(const std::vector<int>& shape);

/// Dense multi-dimensional array of doubles, row-major with the last
/// dimension fastest. Images are laid out H x W x C.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);
  static Tensor of(std::vector<int> shape, std::vector<double> values);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int i) { return data_[index1(i)]; }
  double at(int i) const { return data_[index1(i)]; }
  double& at(int i, int j) { return data_[index2(i, j)]; }
  double at(int i, int j) const { return data_[index2(i, j)]; }
  double& at(int i, int j, int k) { return data_[index3(i, j, k)]; }
  double at(int i, int j, int k) const { return data_[index3(i, j, k)]; }
  double& at(int i, int j, int k, int l) { return data_[index4(i, j, k, l)]; }
  double at(int i, int j, int k, int l) const { return data_[index4(i, j, k, l)]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  std::string shape_str() const { return bnk::shape_str(shape_); }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::size_t index1(int i) const;
  std::size_t index2(int i, int j) const;
  std::size_t index3(int i, int j, int k) const;
  std::size_t index4(int i, int j, int k, int l) const;

  std::vector<int> shape_;
  std::vector<double> data_;
};

enum class Padding { valid, same };

/// Kernel footprint, stride (shared by both axes) and padding rule for
/// convolution and pooling windows.
struct ConvGeometry {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  Padding padding = Padding::valid;
};

/// Output extent along one axis. `same` gives ceil(in/stride); `valid` gives
/// floor((in - kernel)/stride) + 1 and throws when that is not positive.
int conv_out_extent(int in, int kernel, int stride, Padding padding);

struct PadOffsets {
  int top = 0;
  int left = 0;
};

/// Zero-padding origin for `same` geometry. The odd pixel of an uneven total
/// pad goes to the bottom/right.
PadOffsets pad_offsets(int in_h, int in_w, const ConvGeometry& g, int out_h, int out_w);

}  // namespace bnk
