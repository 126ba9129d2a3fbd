#include "banknet/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "banknet/rng.hpp"

namespace bnk {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::depthwise_conv: return "depthwise_conv";
    case LayerKind::pointwise_conv: return "pointwise_conv";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::activation: return "activation";
    case LayerKind::pool: return "pool";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax: return "softmax";
    case LayerKind::residual_add: return "residual_add";
    case LayerKind::concat: return "concat";
  }
  return "?";
}

bool LayerSpec::has_params() const {
  switch (kind) {
    case LayerKind::conv:
    case LayerKind::depthwise_conv:
    case LayerKind::pointwise_conv:
    case LayerKind::batchnorm:
    case LayerKind::dense:
      return true;
    default:
      return false;
  }
}

namespace {

std::size_t arity(LayerKind kind) {
  return (kind == LayerKind::residual_add || kind == LayerKind::concat) ? 2 : 1;
}

}  // namespace

void ModelSpec::validate() const {
  if (layers.empty()) throw ShapeError("model has no layers");
  std::set<std::string> seen;
  std::set<std::string> consumed;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.name.empty() || l.name[0] == '@') {
      throw ShapeError("bad layer name '" + l.name + "'");
    }
    if (!seen.insert(l.name).second) {
      throw ShapeError("duplicate layer name '" + l.name + "'");
    }
    if (l.inputs.size() != arity(l.kind)) {
      throw ShapeError("layer '" + l.name + "' (" + layer_kind_name(l.kind) + ") expects " +
                       std::to_string(arity(l.kind)) + " inputs, has " +
                       std::to_string(l.inputs.size()));
    }
    for (const std::string& in : l.inputs) {
      if (in == kModelInput) continue;
      if (!seen.count(in) || in == l.name) {
        throw ShapeError("layer '" + l.name + "' reads '" + in +
                         "' which is not an earlier layer");
      }
      consumed.insert(in);
    }
  }
  // Single output: every layer except the last feeds something downstream.
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (!consumed.count(layers[i].name)) {
      throw ShapeError("layer '" + layers[i].name + "' is a second dangling output");
    }
  }
  if (backbone_boundary >= static_cast<int>(layers.size())) {
    throw ShapeError("backbone_boundary past the last layer");
  }
  if (backbone_boundary >= 0) {
    for (std::size_t i = backbone_boundary + 1; i < layers.size(); ++i) {
      const LayerKind k = layers[i].kind;
      if (k != LayerKind::dense && k != LayerKind::activation && k != LayerKind::softmax) {
        throw ShapeError("head layer '" + layers[i].name + "' has non-head kind " +
                         layer_kind_name(k));
      }
    }
  }
}

std::vector<std::vector<int>> ModelSpec::shape_pass(const std::vector<int>& input_shape) const {
  validate();
  if (static_cast<int>(input_shape.size()) != input_rank) {
    throw ShapeError("model expects rank-" + std::to_string(input_rank) + " input, got " +
                     shape_str(input_shape));
  }
  if (input_width > 0 && input_shape.back() != input_width) {
    throw ShapeError("model expects input width " + std::to_string(input_width) + ", got " +
                     shape_str(input_shape));
  }

  std::vector<std::vector<int>> shapes(layers.size());
  auto shape_of = [&](const std::string& name, std::size_t upto) -> const std::vector<int>& {
    if (name == kModelInput) return input_shape;
    for (std::size_t j = 0; j < upto; ++j) {
      if (layers[j].name == name) return shapes[j];
    }
    throw ShapeError("unresolved input '" + name + "'");
  };

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::vector<int>& in = shape_of(l.inputs[0], i);
    switch (l.kind) {
      case LayerKind::conv: {
        if (in.size() != 3 || in[2] != l.in_channels) {
          throw ShapeError("layer '" + l.name + "' wants " + std::to_string(l.in_channels) +
                           " channels, got input " + shape_str(in));
        }
        shapes[i] = {conv_out_extent(in[0], l.geom.kernel_h, l.geom.stride, l.geom.padding),
                     conv_out_extent(in[1], l.geom.kernel_w, l.geom.stride, l.geom.padding),
                     l.out_channels};
        break;
      }
      case LayerKind::depthwise_conv: {
        if (in.size() != 3 || in[2] != l.in_channels) {
          throw ShapeError("layer '" + l.name + "' wants " + std::to_string(l.in_channels) +
                           " channels, got input " + shape_str(in));
        }
        shapes[i] = {conv_out_extent(in[0], l.geom.kernel_h, l.geom.stride, l.geom.padding),
                     conv_out_extent(in[1], l.geom.kernel_w, l.geom.stride, l.geom.padding),
                     l.in_channels};
        break;
      }
      case LayerKind::pointwise_conv: {
        if (in.size() != 3 || in[2] != l.in_channels) {
          throw ShapeError("layer '" + l.name + "' wants " + std::to_string(l.in_channels) +
                           " channels, got input " + shape_str(in));
        }
        shapes[i] = {in[0], in[1], l.out_channels};
        break;
      }
      case LayerKind::batchnorm: {
        if (in.empty() || in.back() != l.in_channels) {
          throw ShapeError("layer '" + l.name + "' wants " + std::to_string(l.in_channels) +
                           " channels, got input " + shape_str(in));
        }
        shapes[i] = in;
        break;
      }
      case LayerKind::activation: {
        shapes[i] = in;
        break;
      }
      case LayerKind::pool: {
        if (in.size() != 3) {
          throw ShapeError("layer '" + l.name + "' pools a non-image input " + shape_str(in));
        }
        if (l.pool_kind == PoolKind::global_avg) {
          shapes[i] = {in[2]};
        } else {
          shapes[i] = {conv_out_extent(in[0], l.geom.kernel_h, l.geom.stride, l.geom.padding),
                       conv_out_extent(in[1], l.geom.kernel_w, l.geom.stride, l.geom.padding),
                       in[2]};
        }
        break;
      }
      case LayerKind::dense: {
        if (in.size() != 1 || in[0] != l.in_features) {
          throw ShapeError("layer '" + l.name + "' wants a length-" +
                           std::to_string(l.in_features) + " vector, got input " + shape_str(in));
        }
        shapes[i] = {l.out_features};
        break;
      }
      case LayerKind::softmax: {
        if (in.size() != 1 || in[0] < 1) {
          throw ShapeError("layer '" + l.name + "' needs a non-empty vector, got " +
                           shape_str(in));
        }
        shapes[i] = in;
        break;
      }
      case LayerKind::residual_add: {
        const std::vector<int>& rhs = shape_of(l.inputs[1], i);
        if (in != rhs) {
          throw ShapeError("layer '" + l.name + "' adds mismatched shapes " + shape_str(in) +
                           " vs " + shape_str(rhs));
        }
        shapes[i] = in;
        break;
      }
      case LayerKind::concat: {
        const std::vector<int>& rhs = shape_of(l.inputs[1], i);
        if (in.size() != 3 || rhs.size() != 3 || in[0] != rhs[0] || in[1] != rhs[1]) {
          throw ShapeError("layer '" + l.name + "' concats mismatched shapes " + shape_str(in) +
                           " vs " + shape_str(rhs));
        }
        shapes[i] = {in[0], in[1], in[2] + rhs[2]};
        break;
      }
    }
  }
  return shapes;
}

std::vector<int> ModelSpec::output_shape(const std::vector<int>& input_shape) const {
  return shape_pass(input_shape).back();
}

std::vector<std::pair<std::string, std::vector<int>>> ModelSpec::param_decls() const {
  std::vector<std::pair<std::string, std::vector<int>>> decls;
  for (const LayerSpec& l : layers) {
    switch (l.kind) {
      case LayerKind::conv:
        decls.emplace_back(l.name + "/kernel",
                           std::vector<int>{l.geom.kernel_h, l.geom.kernel_w, l.in_channels,
                                            l.out_channels});
        decls.emplace_back(l.name + "/bias", std::vector<int>{l.out_channels});
        break;
      case LayerKind::depthwise_conv:
        decls.emplace_back(l.name + "/kernel",
                           std::vector<int>{l.geom.kernel_h, l.geom.kernel_w, l.in_channels});
        decls.emplace_back(l.name + "/bias", std::vector<int>{l.in_channels});
        break;
      case LayerKind::pointwise_conv:
        decls.emplace_back(l.name + "/kernel", std::vector<int>{l.in_channels, l.out_channels});
        decls.emplace_back(l.name + "/bias", std::vector<int>{l.out_channels});
        break;
      case LayerKind::batchnorm:
        decls.emplace_back(l.name + "/gamma", std::vector<int>{l.in_channels});
        decls.emplace_back(l.name + "/beta", std::vector<int>{l.in_channels});
        decls.emplace_back(l.name + "/running_mean", std::vector<int>{l.in_channels});
        decls.emplace_back(l.name + "/running_var", std::vector<int>{l.in_channels});
        break;
      case LayerKind::dense:
        decls.emplace_back(l.name + "/weight", std::vector<int>{l.in_features, l.out_features});
        decls.emplace_back(l.name + "/bias", std::vector<int>{l.out_features});
        break;
      default:
        break;
    }
  }
  return decls;
}

int ModelSpec::layer_index(const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const LayerSpec& ModelSpec::layer(const std::string& name) const {
  const int i = layer_index(name);
  if (i < 0) throw ShapeError("no layer named '" + name + "'");
  return layers[static_cast<std::size_t>(i)];
}

void ParamStore::add(std::string name, Tensor value) {
  if (values_.count(name)) throw Error("duplicate parameter '" + name + "'");
  order_.push_back(name);
  values_.emplace(std::move(name), std::move(value));
}

bool ParamStore::has(const std::string& name) const { return values_.count(name) > 0; }

Tensor& ParamStore::at(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw Error("missing parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw Error("missing parameter '" + name + "'");
  return it->second;
}

std::string ParamStore::layer_of(const std::string& param_name) {
  const auto slash = param_name.rfind('/');
  return slash == std::string::npos ? param_name : param_name.substr(0, slash);
}

bool ParamStore::param_frozen(const std::string& param_name) const {
  return frozen_.count(layer_of(param_name)) > 0;
}

ParamStore init_params(const ModelSpec& model, std::uint64_t seed) {
  ParamStore store;
  SplitMix64 rng(derive_seed(seed, 0x1417, 0));
  for (const LayerSpec& l : model.layers) {
    if (!l.has_params()) continue;
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::depthwise_conv:
      case LayerKind::pointwise_conv:
      case LayerKind::dense: {
        int fan_in = 0;
        std::vector<int> shape;
        std::vector<int> bias_shape;
        std::string kernel_name = l.name + "/kernel";
        if (l.kind == LayerKind::conv) {
          fan_in = l.geom.kernel_h * l.geom.kernel_w * l.in_channels;
          shape = {l.geom.kernel_h, l.geom.kernel_w, l.in_channels, l.out_channels};
          bias_shape = {l.out_channels};
        } else if (l.kind == LayerKind::depthwise_conv) {
          fan_in = l.geom.kernel_h * l.geom.kernel_w;
          shape = {l.geom.kernel_h, l.geom.kernel_w, l.in_channels};
          bias_shape = {l.in_channels};
        } else if (l.kind == LayerKind::pointwise_conv) {
          fan_in = l.in_channels;
          shape = {l.in_channels, l.out_channels};
          bias_shape = {l.out_channels};
        } else {
          fan_in = l.in_features;
          shape = {l.in_features, l.out_features};
          bias_shape = {l.out_features};
          kernel_name = l.name + "/weight";
        }
        Tensor k(shape);
        const double scale = std::sqrt(2.0 / std::max(fan_in, 1));
        // Drawn at float32 granularity so a fresh store round-trips bitwise
        // through the f32 checkpoint format.
        for (std::size_t i = 0; i < k.size(); ++i) {
          k[i] = static_cast<double>(static_cast<float>(rng.normal() * scale));
        }
        store.add(kernel_name, std::move(k));
        store.add(l.name + "/bias", Tensor(bias_shape));
        break;
      }
      case LayerKind::batchnorm: {
        store.add(l.name + "/gamma", Tensor::full({l.in_channels}, 1.0));
        store.add(l.name + "/beta", Tensor({l.in_channels}));
        store.add(l.name + "/running_mean", Tensor({l.in_channels}));
        store.add(l.name + "/running_var", Tensor::full({l.in_channels}, 1.0));
        break;
      }
      default:
        break;
    }
  }
  return store;
}

const Tensor& ForwardTrace::logits(const ModelSpec& model) const {
  if (model.layers.empty() || model.layers.back().kind != LayerKind::softmax) {
    throw ShapeError("model does not end in softmax");
  }
  const std::string& producer = model.layers.back().inputs[0];
  if (producer == kModelInput) return input;
  const int idx = model.layer_index(producer);
  return activations[static_cast<std::size_t>(idx)];
}

Tensor forward(const ModelSpec& model, const ParamStore& params, const Tensor& input,
               ForwardTrace* trace) {
  model.validate();
  std::vector<Tensor> acts(model.layers.size());
  auto value_of = [&](const std::string& name, std::size_t upto) -> const Tensor& {
    if (name == kModelInput) return input;
    for (std::size_t j = upto; j-- > 0;) {
      if (model.layers[j].name == name) return acts[j];
    }
    throw ShapeError("unresolved input '" + name + "'");
  };

  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    const Tensor& in = value_of(l.inputs[0], i);
    switch (l.kind) {
      case LayerKind::conv:
        acts[i] = conv2d(in, params.at(l.name + "/kernel"), params.at(l.name + "/bias"), l.geom);
        break;
      case LayerKind::depthwise_conv:
        acts[i] = depthwise_conv2d(in, params.at(l.name + "/kernel"), params.at(l.name + "/bias"),
                                   l.geom);
        break;
      case LayerKind::pointwise_conv:
        acts[i] = pointwise_conv2d(in, params.at(l.name + "/kernel"), params.at(l.name + "/bias"));
        break;
      case LayerKind::batchnorm:
        acts[i] = batchnorm_infer(in, params.at(l.name + "/gamma"), params.at(l.name + "/beta"),
                                  params.at(l.name + "/running_mean"),
                                  params.at(l.name + "/running_var"), l.bn_eps);
        break;
      case LayerKind::activation:
        acts[i] = activation(in, l.act);
        break;
      case LayerKind::pool:
        acts[i] = pool(in, l.pool_kind, l.geom);
        break;
      case LayerKind::dense:
        acts[i] = dense(in, params.at(l.name + "/weight"), params.at(l.name + "/bias"));
        break;
      case LayerKind::softmax:
        acts[i] = softmax(in);
        break;
      case LayerKind::residual_add:
        acts[i] = residual_add(in, value_of(l.inputs[1], i));
        break;
      case LayerKind::concat:
        acts[i] = concat_channels(in, value_of(l.inputs[1], i));
        break;
    }
  }

  Tensor out = acts.back();
  if (trace) {
    trace->input = input;
    trace->activations = std::move(acts);
    trace->cached = true;
  }
  return out;
}

LayerGrads backward(const ModelSpec& model, const ParamStore& params, const ForwardTrace& trace,
                    const Tensor& grad_output, const BackwardOptions& options) {
  if (!trace.cached || trace.activations.size() != model.layers.size()) {
    throw Error("backward without cached forward state");
  }
  const std::size_t n = model.layers.size();

  std::vector<Tensor> slot(n);
  Tensor input_slot;
  auto accumulate = [](Tensor& dst, const Tensor& src) {
    if (dst.empty()) {
      dst = src;
    } else {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  };
  auto route = [&](const std::string& producer, const Tensor& grad) {
    if (producer == kModelInput) {
      accumulate(input_slot, grad);
    } else {
      accumulate(slot[static_cast<std::size_t>(model.layer_index(producer))], grad);
    }
  };
  auto value_of = [&](const std::string& name) -> const Tensor& {
    if (name == kModelInput) return trace.input;
    return trace.activations[static_cast<std::size_t>(model.layer_index(name))];
  };

  std::size_t start = n;  // exclusive upper bound of the reverse walk
  if (options.grad_at_logits) {
    if (model.layers.back().kind != LayerKind::softmax) {
      throw ShapeError("grad_at_logits requires a final softmax layer");
    }
    if (!trace.logits(model).same_shape(grad_output)) {
      throw ShapeError("grad_output " + grad_output.shape_str() + " vs logits " +
                       trace.logits(model).shape_str());
    }
    route(model.layers.back().inputs[0], grad_output);
    start = n - 1;
  } else {
    if (!trace.activations[n - 1].same_shape(grad_output)) {
      throw ShapeError("grad_output " + grad_output.shape_str() + " vs model output " +
                       trace.activations[n - 1].shape_str());
    }
    slot[n - 1] = grad_output;
  }

  // Lowest layer that still needs parameter gradients; below it, propagation
  // only matters when the caller wants the input gradient.
  int first_unfrozen = static_cast<int>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (model.layers[i].has_params() && !params.layer_frozen(model.layers[i].name)) {
      first_unfrozen = static_cast<int>(i);
      break;
    }
  }

  LayerGrads result;
  for (std::size_t i = start; i-- > 0;) {
    if (static_cast<int>(i) < first_unfrozen && !options.need_input_grad) break;
    const LayerSpec& l = model.layers[i];
    if (slot[i].empty()) continue;  // dead branch (possible only for the unused last slot)
    const Tensor& gout = slot[i];
    const Tensor& in = value_of(l.inputs[0]);
    const bool frozen = params.layer_frozen(l.name);
    switch (l.kind) {
      case LayerKind::conv: {
        ConvGrads g = conv2d_backward(in, params.at(l.name + "/kernel"), l.geom, gout);
        if (!frozen) {
          result.grad_params[l.name + "/kernel"] = std::move(g.kernel);
          result.grad_params[l.name + "/bias"] = std::move(g.bias);
        }
        route(l.inputs[0], g.input);
        break;
      }
      case LayerKind::depthwise_conv: {
        ConvGrads g = depthwise_conv2d_backward(in, params.at(l.name + "/kernel"), l.geom, gout);
        if (!frozen) {
          result.grad_params[l.name + "/kernel"] = std::move(g.kernel);
          result.grad_params[l.name + "/bias"] = std::move(g.bias);
        }
        route(l.inputs[0], g.input);
        break;
      }
      case LayerKind::pointwise_conv: {
        ConvGrads g = pointwise_conv2d_backward(in, params.at(l.name + "/kernel"), gout);
        if (!frozen) {
          result.grad_params[l.name + "/kernel"] = std::move(g.kernel);
          result.grad_params[l.name + "/bias"] = std::move(g.bias);
        }
        route(l.inputs[0], g.input);
        break;
      }
      case LayerKind::batchnorm: {
        BatchnormGrads g = batchnorm_infer_backward(in, params.at(l.name + "/gamma"),
                                                    params.at(l.name + "/running_mean"),
                                                    params.at(l.name + "/running_var"), l.bn_eps,
                                                    gout);
        if (!frozen) {
          result.grad_params[l.name + "/gamma"] = std::move(g.gamma);
          result.grad_params[l.name + "/beta"] = std::move(g.beta);
        }
        route(l.inputs[0], g.input);
        break;
      }
      case LayerKind::activation:
        route(l.inputs[0], activation_backward(in, l.act, gout));
        break;
      case LayerKind::pool:
        route(l.inputs[0], pool_backward(in, l.pool_kind, l.geom, gout));
        break;
      case LayerKind::dense: {
        DenseGrads g = dense_backward(in, params.at(l.name + "/weight"), gout);
        if (!frozen) {
          result.grad_params[l.name + "/weight"] = std::move(g.weights);
          result.grad_params[l.name + "/bias"] = std::move(g.bias);
        }
        route(l.inputs[0], g.input);
        break;
      }
      case LayerKind::softmax:
        route(l.inputs[0], softmax_backward(trace.activations[i], gout));
        break;
      case LayerKind::residual_add:
        route(l.inputs[0], gout);
        route(l.inputs[1], gout);
        break;
      case LayerKind::concat: {
        const Tensor& rhs = value_of(l.inputs[1]);
        const int h = gout.dim(0), w = gout.dim(1);
        const int ca = in.dim(2), cb = rhs.dim(2);
        Tensor ga({h, w, ca}), gb({h, w, cb});
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            for (int ci = 0; ci < ca; ++ci) ga.at(y, x, ci) = gout.at(y, x, ci);
            for (int ci = 0; ci < cb; ++ci) gb.at(y, x, ci) = gout.at(y, x, ca + ci);
          }
        }
        route(l.inputs[0], ga);
        route(l.inputs[1], gb);
        break;
      }
    }
  }

  if (options.need_input_grad) {
    if (input_slot.empty()) input_slot = Tensor(trace.input.shape());
    result.grad_input = std::move(input_slot);
  }
  return result;
}

}  // namespace bnk
