#pragma once

#include "banknet/tensor.hpp"

namespace bnk {

enum class ActKind { relu, relu6 };
enum class PoolKind { max, avg, global_avg };

inline constexpr double kLogClip = 1e-12;

// ---------------------------------------------------------------------------
// Forward primitives. All of these are pure functions: same inputs give
// identical outputs, and nothing is mutated.
// ---------------------------------------------------------------------------

/// Standard 2-D convolution. input H x W x Cin, kernel Kh x Kw x Cin x Cout,
/// bias Cout. Out-of-bounds reads under `same` padding act as zeros.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              const ConvGeometry& geom);

/// Per-channel spatial convolution: output channel c depends only on input
/// channel c. kernel Kh x Kw x C, bias C.
Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        const ConvGeometry& geom);

/// 1x1 channel-mixing convolution. kernel Cin x Cout, bias Cout. Spatial dims
/// are preserved.
Tensor pointwise_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

/// out = input^T * weights + bias. input N, weights N x M, bias M.
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Inference-mode batch normalization over the last (channel) axis:
/// gamma * (x - mean) / sqrt(var + eps) + beta.
Tensor batchnorm_infer(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                       const Tensor& running_mean, const Tensor& running_var, double eps);

Tensor activation(const Tensor& input, ActKind kind);

/// max / avg pooling over geom windows; global_avg ignores the geometry and
/// returns the length-C vector of per-channel means. Under `same` padding,
/// avg divides by the full window area (padding counts as zeros) while max
/// takes the maximum over in-bounds pixels only.
Tensor pool(const Tensor& input, PoolKind kind, const ConvGeometry& geom);

/// Max-stabilized softmax over a rank-1 tensor.
Tensor softmax(const Tensor& logits);

/// -sum(label * ln(max(p, 1e-12))).
double cross_entropy(const Tensor& probs, const Tensor& one_hot);

Tensor residual_add(const Tensor& a, const Tensor& b);

/// Channel-axis concatenation of two H x W x C tensors.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Backward primitives. Each takes the forward inputs it needs plus the
// gradient of the loss w.r.t. the forward output.
// ---------------------------------------------------------------------------

struct ConvGrads {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const ConvGeometry& geom,
                          const Tensor& grad_out);
ConvGrads depthwise_conv2d_backward(const Tensor& input, const Tensor& kernel,
                                    const ConvGeometry& geom, const Tensor& grad_out);
ConvGrads pointwise_conv2d_backward(const Tensor& input, const Tensor& kernel,
                                    const Tensor& grad_out);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out);

struct BatchnormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BatchnormGrads batchnorm_infer_backward(const Tensor& input, const Tensor& gamma,
                                        const Tensor& running_mean, const Tensor& running_var,
                                        double eps, const Tensor& grad_out);

Tensor activation_backward(const Tensor& input, ActKind kind, const Tensor& grad_out);

Tensor pool_backward(const Tensor& input, PoolKind kind, const ConvGeometry& geom,
                     const Tensor& grad_out);

/// Needs the forward output (the probabilities), not the logits.
Tensor softmax_backward(const Tensor& probs, const Tensor& grad_out);

/// d(cross_entropy)/d(probs).
Tensor cross_entropy_backward(const Tensor& probs, const Tensor& one_hot);

/// Fused softmax + cross-entropy. Returns the loss; optionally exposes the
/// probabilities. The fused gradient w.r.t. the logits is probs - one_hot.
double softmax_xent(const Tensor& logits, const Tensor& one_hot, Tensor* probs_out = nullptr);
Tensor softmax_xent_backward(const Tensor& probs, const Tensor& one_hot);

}  // namespace bnk
