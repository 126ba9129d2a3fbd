#include "banknet/zoo.hpp"

#include <cmath>
#include <set>

namespace bnk {

namespace {

int scaled(double multiplier, int width) {
  return std::max(1, static_cast<int>(std::ceil(multiplier * width)));
}

LayerSpec conv_layer(std::string name, std::string input, int cin, int cout, int kernel,
                     int stride, Padding pad = Padding::same) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.name = std::move(name);
  l.inputs = {std::move(input)};
  l.geom = {kernel, kernel, stride, pad};
  l.in_channels = cin;
  l.out_channels = cout;
  return l;
}

LayerSpec depthwise_layer(std::string name, std::string input, int channels, int kernel,
                          int stride) {
  LayerSpec l;
  l.kind = LayerKind::depthwise_conv;
  l.name = std::move(name);
  l.inputs = {std::move(input)};
  l.geom = {kernel, kernel, stride, Padding::same};
  l.in_channels = channels;
  return l;
}

LayerSpec pointwise_layer(std::string name, std::string input, int cin, int cout) {
  LayerSpec l;
  l.kind = LayerKind::pointwise_conv;
  l.name = std::move(name);
  l.inputs = {std::move(input)};
  l.in_channels = cin;
  l.out_channels = cout;
  return l;
}

LayerSpec bn_layer(std::string name, std::string input, int channels) {
  LayerSpec l;
  l.kind = LayerKind::batchnorm;
  l.name = std::move(name);
  l.inputs = {std::move(input)};
  l.in_channels = channels;
  return l;
}

LayerSpec act_layer(std::string name, std::string input, ActKind kind) {
  LayerSpec l;
  l.kind = LayerKind::activation;
  l.name = std::move(name);
  l.inputs = {std::move(input)};
  l.act = kind;
  return l;
}

LayerSpec pool_layer(std::string name, std::string input, PoolKind kind, int window = 1,
                     int stride = 1, Padding pad = Padding::same) {
  LayerSpec l;
  l.kind = LayerKind::pool;
  l.name = std::move(name);
  l.inputs = {std::move(input)};
  l.pool_kind = kind;
  l.geom = {window, window, stride, pad};
  return l;
}

LayerSpec dense_layer(std::string name, std::string input, int nin, int nout) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.name = std::move(name);
  l.inputs = {std::move(input)};
  l.in_features = nin;
  l.out_features = nout;
  return l;
}

LayerSpec binary_layer(LayerKind kind, std::string name, std::string a, std::string b) {
  LayerSpec l;
  l.kind = kind;
  l.name = std::move(name);
  l.inputs = {std::move(a), std::move(b)};
  return l;
}

}  // namespace

ModelSpec build_mobilenet_style(double width_multiplier, int num_blocks, int in_channels) {
  if (num_blocks < 1) throw ShapeError("mobilenet needs at least one block");
  if (width_multiplier <= 0.0 || width_multiplier > 1.0) {
    throw ShapeError("width multiplier must be in (0, 1]");
  }
  constexpr int kStemWidth = 32;

  ModelSpec m;
  m.input_rank = 3;
  m.input_width = in_channels;
  int ch = scaled(width_multiplier, kStemWidth);
  m.layers.push_back(conv_layer("stem", kModelInput, in_channels, ch, 3, 2));
  m.layers.push_back(bn_layer("stem_bn", "stem", ch));
  m.layers.push_back(act_layer("stem_act", "stem_bn", ActKind::relu6));
  std::string prev = "stem_act";

  for (int k = 1; k <= num_blocks; ++k) {
    const std::string b = "block" + std::to_string(k);
    const int stride = (k % 2 == 0) ? 2 : 1;
    const int out_ch = scaled(width_multiplier, 64 << (k / 2));
    m.layers.push_back(depthwise_layer(b + "_dw", prev, ch, 3, stride));
    m.layers.push_back(bn_layer(b + "_dw_bn", b + "_dw", ch));
    m.layers.push_back(act_layer(b + "_dw_act", b + "_dw_bn", ActKind::relu6));
    m.layers.push_back(pointwise_layer(b + "_pw", b + "_dw_act", ch, out_ch));
    m.layers.push_back(bn_layer(b + "_pw_bn", b + "_pw", out_ch));
    m.layers.push_back(act_layer(b + "_pw_act", b + "_pw_bn", ActKind::relu6));
    prev = b + "_pw_act";
    ch = out_ch;
  }

  m.layers.push_back(pool_layer("gap", prev, PoolKind::global_avg));
  m.validate();
  return m;
}

ModelSpec build_resnet_v2_style(int num_stages, int blocks_per_stage, double width_multiplier,
                                int in_channels) {
  if (num_stages < 1 || blocks_per_stage < 1) {
    throw ShapeError("resnet needs at least one stage and one block per stage");
  }
  if (width_multiplier <= 0.0) throw ShapeError("width multiplier must be positive");
  constexpr int kBaseWidth = 16;

  ModelSpec m;
  m.input_rank = 3;
  m.input_width = in_channels;
  int ch = scaled(width_multiplier, kBaseWidth);
  m.layers.push_back(conv_layer("stem", kModelInput, in_channels, ch, 3, 1));
  std::string prev = "stem";

  for (int s = 1; s <= num_stages; ++s) {
    const int out_ch = scaled(width_multiplier, kBaseWidth << (s - 1));
    for (int b = 1; b <= blocks_per_stage; ++b) {
      const std::string n = "s" + std::to_string(s) + "b" + std::to_string(b);
      const bool projecting = (b == 1);
      const int stride = projecting ? 2 : 1;
      m.layers.push_back(bn_layer(n + "_bn1", prev, ch));
      m.layers.push_back(act_layer(n + "_act1", n + "_bn1", ActKind::relu));
      m.layers.push_back(conv_layer(n + "_conv1", n + "_act1", ch, out_ch, 3, stride));
      m.layers.push_back(bn_layer(n + "_bn2", n + "_conv1", out_ch));
      m.layers.push_back(act_layer(n + "_act2", n + "_bn2", ActKind::relu));
      m.layers.push_back(conv_layer(n + "_conv2", n + "_act2", out_ch, out_ch, 3, 1));
      std::string skip = prev;
      if (projecting) {
        m.layers.push_back(conv_layer(n + "_proj", prev, ch, out_ch, 1, 2));
        skip = n + "_proj";
      }
      m.layers.push_back(binary_layer(LayerKind::residual_add, n + "_add", n + "_conv2", skip));
      prev = n + "_add";
      ch = out_ch;
    }
  }

  m.layers.push_back(pool_layer("gap", prev, PoolKind::global_avg));
  m.validate();
  return m;
}

ModelSpec build_nasnet_cell_style(int num_normal_cells, int num_reductions,
                                  double width_multiplier, int in_channels) {
  if (num_normal_cells < 1) throw ShapeError("nasnet needs at least one normal cell");
  if (num_reductions < 0) throw ShapeError("negative reduction count");
  if (width_multiplier <= 0.0) throw ShapeError("width multiplier must be positive");
  constexpr int kStemWidth = 8;

  ModelSpec m;
  m.input_rank = 3;
  m.input_width = in_channels;
  int ch = scaled(width_multiplier, kStemWidth);
  m.layers.push_back(conv_layer("stem", kModelInput, in_channels, ch, 3, 1));
  m.layers.push_back(act_layer("stem_act", "stem", ActKind::relu));
  std::string prev = "stem_act";
  int cell = 0;

  auto normal_cell = [&m, &prev, &ch, &cell]() {
    const std::string n = "cell" + std::to_string(++cell);
    m.layers.push_back(depthwise_layer(n + "_dw", prev, ch, 3, 1));
    m.layers.push_back(pointwise_layer(n + "_pw", n + "_dw", ch, ch));
    m.layers.push_back(binary_layer(LayerKind::residual_add, n + "_res", n + "_pw", prev));
    m.layers.push_back(pool_layer(n + "_avg", prev, PoolKind::avg, 3, 1, Padding::same));
    m.layers.push_back(binary_layer(LayerKind::concat, n + "_cat", n + "_res", n + "_avg"));
    prev = n + "_cat";
    ch *= 2;
  };
  auto reduction_cell = [&m, &prev, &ch, &cell]() {
    const std::string n = "cell" + std::to_string(++cell);
    m.layers.push_back(depthwise_layer(n + "_dw", prev, ch, 3, 2));
    m.layers.push_back(pointwise_layer(n + "_pw", n + "_dw", ch, ch));
    m.layers.push_back(pool_layer(n + "_max", prev, PoolKind::max, 3, 2, Padding::same));
    m.layers.push_back(binary_layer(LayerKind::concat, n + "_cat", n + "_pw", n + "_max"));
    prev = n + "_cat";
    ch *= 2;
  };

  for (int r = 0; r < num_reductions; ++r) {
    for (int i = 0; i < num_normal_cells; ++i) normal_cell();
    reduction_cell();
  }
  for (int i = 0; i < num_normal_cells; ++i) normal_cell();

  m.layers.push_back(pool_layer("gap", prev, PoolKind::global_avg));
  m.validate();
  return m;
}

ModelSpec build_classifier_head(int feature_len, int num_classes, double width_scale) {
  if (feature_len < 1 || num_classes < 1) {
    throw ShapeError("head needs positive feature length and class count");
  }
  if (width_scale <= 0.0 || width_scale > 1.0) {
    throw ShapeError("head width scale must be in (0, 1]");
  }
  constexpr int kHeadWidths[] = {1024, 512, 512, 256, 128};

  ModelSpec m;
  m.input_rank = 1;
  m.input_width = feature_len;
  int nin = feature_len;
  std::string prev = kModelInput;
  for (int i = 0; i < 5; ++i) {
    const int nout = std::max(1, static_cast<int>(std::lround(width_scale * kHeadWidths[i])));
    const std::string n = "head_fc" + std::to_string(i + 1);
    m.layers.push_back(dense_layer(n, prev, nin, nout));
    m.layers.push_back(act_layer(n + "_act", n, ActKind::relu));
    prev = n + "_act";
    nin = nout;
  }
  m.layers.push_back(dense_layer("head_out", prev, nin, num_classes));
  LayerSpec sm;
  sm.kind = LayerKind::softmax;
  sm.name = "head_softmax";
  sm.inputs = {"head_out"};
  m.layers.push_back(sm);
  m.validate();
  return m;
}

int static_output_width(const ModelSpec& model) {
  model.validate();
  std::map<std::string, int> width;
  auto width_of = [&](const std::string& name) {
    if (name == kModelInput) return model.input_width;
    return width.at(name);
  };
  for (const LayerSpec& l : model.layers) {
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::pointwise_conv:
        width[l.name] = l.out_channels;
        break;
      case LayerKind::dense:
        width[l.name] = l.out_features;
        break;
      case LayerKind::concat:
        width[l.name] = width_of(l.inputs[0]) + width_of(l.inputs[1]);
        break;
      default:
        width[l.name] = width_of(l.inputs[0]);
        break;
    }
  }
  return width.at(model.layers.back().name);
}

ModelSpec attach_head(const ModelSpec& backbone, const ModelSpec& head) {
  backbone.validate();
  head.validate();
  const int feature_len = static_output_width(backbone);
  if (head.input_width != feature_len) {
    throw ShapeError("head expects feature length " + std::to_string(head.input_width) +
                     " but backbone produces " + std::to_string(feature_len));
  }
  ModelSpec m;
  m.input_rank = backbone.input_rank;
  m.input_width = backbone.input_width;
  m.layers = backbone.layers;
  const std::string junction = backbone.layers.back().name;
  for (LayerSpec l : head.layers) {
    for (std::string& in : l.inputs) {
      if (in == kModelInput) in = junction;
    }
    m.layers.push_back(std::move(l));
  }
  m.backbone_boundary = static_cast<int>(backbone.layers.size()) - 1;
  m.validate();
  return m;
}

std::pair<ModelSpec, ModelSpec> detach_head(const ModelSpec& model) {
  if (model.backbone_boundary < 0) throw ShapeError("model has no backbone boundary");
  ModelSpec backbone;
  backbone.input_rank = model.input_rank;
  backbone.input_width = model.input_width;
  backbone.layers.assign(model.layers.begin(),
                         model.layers.begin() + model.backbone_boundary + 1);
  backbone.validate();

  ModelSpec head;
  head.input_rank = 1;
  head.input_width = static_output_width(backbone);
  const std::string junction = backbone.layers.back().name;
  for (auto it = model.layers.begin() + model.backbone_boundary + 1; it != model.layers.end();
       ++it) {
    LayerSpec l = *it;
    for (std::string& in : l.inputs) {
      if (in == junction) in = kModelInput;
    }
    head.layers.push_back(std::move(l));
  }
  head.validate();
  return {std::move(backbone), std::move(head)};
}

ParamStore set_frozen(const ModelSpec& model, ParamStore params, FreezeScope scope) {
  params.clear_frozen();
  if (scope == FreezeScope::backbone) {
    if (model.backbone_boundary < 0) {
      throw ShapeError("cannot freeze the backbone of a model without a boundary");
    }
    for (int i = 0; i <= model.backbone_boundary; ++i) {
      params.freeze_layer(model.layers[static_cast<std::size_t>(i)].name);
    }
  }
  return params;
}

ModelFamily parse_model_family(const std::string& name) {
  if (name == "mobilenet") return ModelFamily::mobilenet;
  if (name == "resnet") return ModelFamily::resnet;
  if (name == "nasnet") return ModelFamily::nasnet;
  throw Error("unknown model family '" + name + "' (want mobilenet, resnet or nasnet)");
}

const char* model_family_name(ModelFamily family) {
  switch (family) {
    case ModelFamily::mobilenet: return "mobilenet";
    case ModelFamily::resnet: return "resnet";
    case ModelFamily::nasnet: return "nasnet";
  }
  return "?";
}

BuildPreset preset(const std::string& name) {
  if (name == "tiny") return {"tiny", 0.25, 4, 2, 1, 1, 1, 0.125};
  if (name == "small") return {"small", 0.5, 6, 3, 2, 1, 2, 0.25};
  if (name == "paper") return {"paper", 1.0, 8, 4, 3, 1, 2, 1.0};
  throw Error("unknown preset '" + name + "' (want tiny, small or paper)");
}

ModelSpec build_backbone(ModelFamily family, const BuildPreset& p, int in_channels) {
  switch (family) {
    case ModelFamily::mobilenet:
      return build_mobilenet_style(p.backbone_width, p.mobilenet_blocks, in_channels);
    case ModelFamily::resnet:
      return build_resnet_v2_style(p.resnet_stages, p.resnet_blocks, p.backbone_width,
                                   in_channels);
    case ModelFamily::nasnet:
      return build_nasnet_cell_style(p.nasnet_normals, p.nasnet_reductions, p.backbone_width,
                                     in_channels);
  }
  throw Error("unreachable");
}

ModelSpec build_model(ModelFamily family, const BuildPreset& p, int num_classes,
                      int in_channels) {
  const ModelSpec backbone = build_backbone(family, p, in_channels);
  const ModelSpec head =
      build_classifier_head(static_output_width(backbone), num_classes, p.head_scale);
  return attach_head(backbone, head);
}

}  // namespace bnk
