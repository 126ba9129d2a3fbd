#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "banknet/ops.hpp"
#include "banknet/tensor.hpp"

namespace bnk {

inline constexpr const char* kModelInput = "@input";
inline constexpr double kDefaultBnEps = 1e-3;

enum class LayerKind {
  conv,
  depthwise_conv,
  pointwise_conv,
  batchnorm,
  activation,
  pool,
  dense,
  softmax,
  residual_add,
  concat,
};

const char* layer_kind_name(LayerKind kind);

/// One node of the model graph. `inputs` carries the names of producer
/// layers; kModelInput refers to the model input. Channel/feature widths are
/// fixed at build time so parameter shapes never depend on the image size.
struct LayerSpec {
  LayerKind kind = LayerKind::activation;
  std::string name;
  std::vector<std::string> inputs;

  ConvGeometry geom;       // conv / depthwise_conv / pool
  int in_channels = 0;     // conv / pointwise_conv / depthwise_conv (its only width) / batchnorm
  int out_channels = 0;    // conv / pointwise_conv
  int in_features = 0;     // dense
  int out_features = 0;    // dense
  double bn_eps = kDefaultBnEps;
  ActKind act = ActKind::relu;
  PoolKind pool_kind = PoolKind::max;

  bool has_params() const;
};

/// Ordered DAG of LayerSpecs with one input and one output (the last layer).
struct ModelSpec {
  std::vector<LayerSpec> layers;
  /// Index of the last feature-extractor layer; everything after it is the
  /// classifier head. -1 means headless (a bare backbone or head fragment).
  int backbone_boundary = -1;
  /// Rank the model expects at @input: 3 for image models, 1 for head
  /// fragments operating on feature vectors.
  int input_rank = 3;
  /// Channel count (rank 3) or feature length (rank 1) expected at @input.
  int input_width = 0;

  /// Structural checks: unique names, inputs resolve to earlier layers,
  /// single output, and only dense/activation/softmax after the boundary.
  void validate() const;

  /// Static dry-run: predicted output shape of every layer for the given
  /// input shape. Throws ShapeError on inconsistent wiring.
  std::vector<std::vector<int>> shape_pass(const std::vector<int>& input_shape) const;
  std::vector<int> output_shape(const std::vector<int>& input_shape) const;

  /// Parameter declarations in layer order: (name, shape) pairs.
  std::vector<std::pair<std::string, std::vector<int>>> param_decls() const;

  int layer_index(const std::string& name) const;  // -1 when absent
  const LayerSpec& layer(const std::string& name) const;
};

/// Named parameter tensors in declaration order, plus the set of frozen
/// layer names. Keys are "<layer>/<part>", e.g. "stem/kernel".
class ParamStore {
 public:
  void add(std::string name, Tensor value);
  bool has(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  void freeze_layer(const std::string& layer_name) { frozen_.insert(layer_name); }
  void clear_frozen() { frozen_.clear(); }
  const std::set<std::string>& frozen() const { return frozen_; }
  bool layer_frozen(const std::string& layer_name) const { return frozen_.count(layer_name) > 0; }
  /// Frozen check for a "<layer>/<part>" parameter name.
  bool param_frozen(const std::string& param_name) const;

  static std::string layer_of(const std::string& param_name);

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> values_;
  std::set<std::string> frozen_;
};

/// He-style seeded initialization; batchnorm starts as the identity
/// (gamma 1, beta 0, mean 0, var 1).
ParamStore init_params(const ModelSpec& model, std::uint64_t seed);

/// Gradients from one backward pass: input gradient plus named parameter
/// gradients whose shapes match the parameters they differentiate.
struct LayerGrads {
  Tensor grad_input;
  std::map<std::string, Tensor> grad_params;
};

/// Cached per-layer activations from a forward pass, required by backward.
struct ForwardTrace {
  Tensor input;
  std::vector<Tensor> activations;
  bool cached = false;

  const Tensor& output() const { return activations.back(); }
  /// Input of the final softmax layer (the logits), when the model ends in one.
  const Tensor& logits(const ModelSpec& model) const;
};

/// Runs the graph. Pass a trace to enable backward().
Tensor forward(const ModelSpec& model, const ParamStore& params, const Tensor& input,
               ForwardTrace* trace = nullptr);

struct BackwardOptions {
  /// grad_output is w.r.t. the final softmax's input instead of its output
  /// (the fused cross-entropy path).
  bool grad_at_logits = false;
  /// Skip the input gradient when the caller only trains parameters.
  bool need_input_grad = true;
};

/// Backward through the whole graph. Frozen layers get no parameter
/// gradients; propagation stops early once no unfrozen layer remains below,
/// unless the input gradient was requested. Throws if the trace was not
/// produced by a caching forward() call.
LayerGrads backward(const ModelSpec& model, const ParamStore& params, const ForwardTrace& trace,
                    const Tensor& grad_output, const BackwardOptions& options = {});

}  // namespace bnk
