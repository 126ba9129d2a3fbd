#pragma once

#include <string>
#include <utility>

#include "banknet/model.hpp"

namespace bnk {

/// Inverted-residual-free MobileNet-style stack: stem 3x3 stride-2 conv, then
/// repeated [depthwise 3x3 -> bn -> relu6 -> pointwise -> bn -> relu6]
/// blocks. Every second block strides, and the first block plus each strided
/// block doubles the channel width. Ends in global average pooling.
ModelSpec build_mobilenet_style(double width_multiplier, int num_blocks, int in_channels = 3);

/// Pre-activation residual stack (bn -> relu -> conv). Each stage opens with
/// a convolutional block (stride-2 1x1 projection on the skip path) followed
/// by identity blocks. Ends in global average pooling.
ModelSpec build_resnet_v2_style(int num_stages, int blocks_per_stage, double width_multiplier,
                                int in_channels = 3);

/// Simplified fixed-cell stack. Normal cell:
///   concat( sepconv3x3(h) + h , avgpool3x3-same(h) )      (stride 1)
/// Reduction cell:
///   concat( sepconv3x3(h, stride 2) , maxpool3x3(h, stride 2) )
/// where sepconv = depthwise then pointwise. Cells are stacked as
/// [normal x n, reduction] x num_reductions followed by n trailing normals,
/// then global average pooling. Every cell doubles the channel count.
ModelSpec build_nasnet_cell_style(int num_normal_cells, int num_reductions,
                                  double width_multiplier, int in_channels = 3);

/// Dense classifier head: widths round(width_scale * [1024, 512, 512, 256,
/// 128]) with relu after each, then dense(num_classes) + softmax.
ModelSpec build_classifier_head(int feature_len, int num_classes, double width_scale = 1.0);

/// Joins a pooled backbone to a head fragment, setting backbone_boundary at
/// the junction. Throws ShapeError naming both lengths when the feature
/// widths disagree.
ModelSpec attach_head(const ModelSpec& backbone, const ModelSpec& head);

/// Splits a model at its backbone_boundary into (backbone, head fragment).
std::pair<ModelSpec, ModelSpec> detach_head(const ModelSpec& model);

enum class FreezeScope { none, backbone };

/// `backbone` freezes every layer at or before backbone_boundary; `none`
/// clears the frozen set.
ParamStore set_frozen(const ModelSpec& model, ParamStore params, FreezeScope scope);

/// Channel/feature width of the model output, derived without fixing the
/// spatial input size.
int static_output_width(const ModelSpec& model);

enum class ModelFamily { mobilenet, resnet, nasnet };

ModelFamily parse_model_family(const std::string& name);
const char* model_family_name(ModelFamily family);

/// Scale knobs for desk-size vs full-width builds. `paper` keeps the full
/// classifier head widths.
struct BuildPreset {
  std::string name;
  double backbone_width = 1.0;
  int mobilenet_blocks = 4;
  int resnet_stages = 2;
  int resnet_blocks = 1;
  int nasnet_normals = 1;
  int nasnet_reductions = 1;
  double head_scale = 1.0;
};

BuildPreset preset(const std::string& name);  // "tiny", "small", "paper"

ModelSpec build_backbone(ModelFamily family, const BuildPreset& p, int in_channels = 3);
ModelSpec build_model(ModelFamily family, const BuildPreset& p, int num_classes,
                      int in_channels = 3);

}  // namespace bnk
