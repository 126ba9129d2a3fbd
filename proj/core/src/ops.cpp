#include "banknet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

namespace bnk {

namespace {

void require_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must be rank " + std::to_string(rank) + ", got shape " +
                     t.shape_str());
  }
}

void require_kernel_geom(const Tensor& kernel, const ConvGeometry& g) {
  if (kernel.dim(0) != g.kernel_h || kernel.dim(1) != g.kernel_w) {
    throw ShapeError("kernel tensor " + kernel.shape_str() + " disagrees with geometry " +
                     std::to_string(g.kernel_h) + "x" + std::to_string(g.kernel_w));
  }
}

struct OutPlan {
  int out_h = 0;
  int out_w = 0;
  PadOffsets pad;
};

OutPlan plan_output(int in_h, int in_w, const ConvGeometry& g) {
  OutPlan p;
  p.out_h = conv_out_extent(in_h, g.kernel_h, g.stride, g.padding);
  p.out_w = conv_out_extent(in_w, g.kernel_w, g.stride, g.padding);
  p.pad = pad_offsets(in_h, in_w, g, p.out_h, p.out_w);
  return p;
}

// Patch matrix for the optimized convolution path: row r holds the receptive
// field of output pixel r in (dy, dx, ci) order, matching the kernel layout,
// with out-of-bounds pixels left at zero.
std::vector<double> im2col(const Tensor& in, const ConvGeometry& g, const OutPlan& plan) {
  const int h = in.dim(0), w = in.dim(1), c = in.dim(2);
  const std::size_t cols =
      static_cast<std::size_t>(g.kernel_h) * g.kernel_w * static_cast<std::size_t>(c);
  std::vector<double> col(static_cast<std::size_t>(plan.out_h) * plan.out_w * cols, 0.0);
  const double* src = in.data();
  for (int oy = 0; oy < plan.out_h; ++oy) {
    for (int ox = 0; ox < plan.out_w; ++ox) {
      double* row = col.data() + (static_cast<std::size_t>(oy) * plan.out_w + ox) * cols;
      for (int dy = 0; dy < g.kernel_h; ++dy) {
        const int sy = oy * g.stride + dy - plan.pad.top;
        if (sy < 0 || sy >= h) continue;
        for (int dx = 0; dx < g.kernel_w; ++dx) {
          const int sx = ox * g.stride + dx - plan.pad.left;
          if (sx < 0 || sx >= w) continue;
          const double* px = src + (static_cast<std::size_t>(sy) * w + sx) * c;
          std::memcpy(row + (static_cast<std::size_t>(dy) * g.kernel_w + dx) * c, px,
                      sizeof(double) * c);
        }
      }
    }
  }
  return col;
}

// Scatter-add of a patch-matrix gradient back onto the input grid; the exact
// inverse of the im2col gather.
void col2im_add(const std::vector<double>& col, const ConvGeometry& g, const OutPlan& plan,
                Tensor& grad_in) {
  const int h = grad_in.dim(0), w = grad_in.dim(1), c = grad_in.dim(2);
  const std::size_t cols =
      static_cast<std::size_t>(g.kernel_h) * g.kernel_w * static_cast<std::size_t>(c);
  double* dst = grad_in.data();
  for (int oy = 0; oy < plan.out_h; ++oy) {
    for (int ox = 0; ox < plan.out_w; ++ox) {
      const double* row = col.data() + (static_cast<std::size_t>(oy) * plan.out_w + ox) * cols;
      for (int dy = 0; dy < g.kernel_h; ++dy) {
        const int sy = oy * g.stride + dy - plan.pad.top;
        if (sy < 0 || sy >= h) continue;
        for (int dx = 0; dx < g.kernel_w; ++dx) {
          const int sx = ox * g.stride + dx - plan.pad.left;
          if (sx < 0 || sx >= w) continue;
          double* px = dst + (static_cast<std::size_t>(sy) * w + sx) * c;
          const double* src = row + (static_cast<std::size_t>(dy) * g.kernel_w + dx) * c;
          for (int ci = 0; ci < c; ++ci) px[ci] += src[ci];
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              const ConvGeometry& geom) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  require_rank(bias, 1, "conv2d bias");
  require_kernel_geom(kernel, geom);
  const int cin = input.dim(2), cout = kernel.dim(3);
  if (kernel.dim(2) != cin) {
    throw ShapeError("conv2d channel mismatch: input " + input.shape_str() + " vs kernel " +
                     kernel.shape_str());
  }
  if (bias.dim(0) != cout) {
    throw ShapeError("conv2d bias " + bias.shape_str() + " vs kernel " + kernel.shape_str());
  }

  const OutPlan plan = plan_output(input.dim(0), input.dim(1), geom);
  const std::vector<double> col = im2col(input, geom, plan);
  const std::size_t rows = static_cast<std::size_t>(plan.out_h) * plan.out_w;
  const std::size_t cols = col.size() / std::max<std::size_t>(rows, 1);

  Tensor out({plan.out_h, plan.out_w, cout});
  double* o = out.data();
  const double* km = kernel.data();
  const double* b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = o + r * cout;
    for (int co = 0; co < cout; ++co) orow[co] = b[co];
    const double* crow = col.data() + r * cols;
    for (std::size_t kk = 0; kk < cols; ++kk) {
      const double a = crow[kk];
      const double* krow = km + kk * cout;
      for (int co = 0; co < cout; ++co) orow[co] += a * krow[co];
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const ConvGeometry& geom,
                          const Tensor& grad_out) {
  require_rank(grad_out, 3, "conv2d grad_out");
  const int cout = kernel.dim(3);
  const OutPlan plan = plan_output(input.dim(0), input.dim(1), geom);
  if (grad_out.dim(0) != plan.out_h || grad_out.dim(1) != plan.out_w ||
      grad_out.dim(2) != cout) {
    throw ShapeError("conv2d grad_out " + grad_out.shape_str() + " does not match output " +
                     shape_str({plan.out_h, plan.out_w, cout}));
  }
  const std::vector<double> col = im2col(input, geom, plan);
  const std::size_t rows = static_cast<std::size_t>(plan.out_h) * plan.out_w;
  const std::size_t cols = col.size() / std::max<std::size_t>(rows, 1);

  ConvGrads g;
  g.input = Tensor(input.shape());
  g.kernel = Tensor(kernel.shape());
  g.bias = Tensor({cout});
  double* gk = g.kernel.data();
  double* gb = g.bias.data();
  const double* go = grad_out.data();
  const double* km = kernel.data();

  std::vector<double> gcol(col.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* gorow = go + r * cout;
    for (int co = 0; co < cout; ++co) gb[co] += gorow[co];
    const double* crow = col.data() + r * cols;
    double* gcrow = gcol.data() + r * cols;
    for (std::size_t kk = 0; kk < cols; ++kk) {
      const double a = crow[kk];
      const double* krow = km + kk * cout;
      double* gkrow = gk + kk * cout;
      double acc = 0.0;
      for (int co = 0; co < cout; ++co) {
        gkrow[co] += a * gorow[co];
        acc += krow[co] * gorow[co];
      }
      gcrow[kk] = acc;
    }
  }
  col2im_add(gcol, geom, plan, g.input);
  return g;
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        const ConvGeometry& geom) {
  require_rank(input, 3, "depthwise input");
  require_rank(kernel, 3, "depthwise kernel");
  require_rank(bias, 1, "depthwise bias");
  require_kernel_geom(kernel, geom);
  const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (kernel.dim(2) != c || bias.dim(0) != c) {
    throw ShapeError("depthwise channel mismatch: input " + input.shape_str() + " vs kernel " +
                     kernel.shape_str() + " / bias " + bias.shape_str());
  }
  const OutPlan plan = plan_output(h, w, geom);
  Tensor out({plan.out_h, plan.out_w, c});
  const double* src = input.data();
  const double* km = kernel.data();
  double* o = out.data();
  for (int oy = 0; oy < plan.out_h; ++oy) {
    for (int ox = 0; ox < plan.out_w; ++ox) {
      double* orow = o + (static_cast<std::size_t>(oy) * plan.out_w + ox) * c;
      for (int ci = 0; ci < c; ++ci) orow[ci] = bias[static_cast<std::size_t>(ci)];
      for (int dy = 0; dy < geom.kernel_h; ++dy) {
        const int sy = oy * geom.stride + dy - plan.pad.top;
        if (sy < 0 || sy >= h) continue;
        for (int dx = 0; dx < geom.kernel_w; ++dx) {
          const int sx = ox * geom.stride + dx - plan.pad.left;
          if (sx < 0 || sx >= w) continue;
          const double* px = src + (static_cast<std::size_t>(sy) * w + sx) * c;
          const double* kk = km + (static_cast<std::size_t>(dy) * geom.kernel_w + dx) * c;
          for (int ci = 0; ci < c; ++ci) orow[ci] += px[ci] * kk[ci];
        }
      }
    }
  }
  return out;
}

ConvGrads depthwise_conv2d_backward(const Tensor& input, const Tensor& kernel,
                                    const ConvGeometry& geom, const Tensor& grad_out) {
  const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const OutPlan plan = plan_output(h, w, geom);
  if (grad_out.rank() != 3 || grad_out.dim(0) != plan.out_h || grad_out.dim(1) != plan.out_w ||
      grad_out.dim(2) != c) {
    throw ShapeError("depthwise grad_out " + grad_out.shape_str() + " does not match output " +
                     shape_str({plan.out_h, plan.out_w, c}));
  }
  ConvGrads g;
  g.input = Tensor(input.shape());
  g.kernel = Tensor(kernel.shape());
  g.bias = Tensor({c});
  const double* src = input.data();
  const double* km = kernel.data();
  const double* go = grad_out.data();
  double* gin = g.input.data();
  double* gk = g.kernel.data();
  double* gb = g.bias.data();
  for (int oy = 0; oy < plan.out_h; ++oy) {
    for (int ox = 0; ox < plan.out_w; ++ox) {
      const double* gorow = go + (static_cast<std::size_t>(oy) * plan.out_w + ox) * c;
      for (int ci = 0; ci < c; ++ci) gb[ci] += gorow[ci];
      for (int dy = 0; dy < geom.kernel_h; ++dy) {
        const int sy = oy * geom.stride + dy - plan.pad.top;
        if (sy < 0 || sy >= h) continue;
        for (int dx = 0; dx < geom.kernel_w; ++dx) {
          const int sx = ox * geom.stride + dx - plan.pad.left;
          if (sx < 0 || sx >= w) continue;
          const std::size_t poff = (static_cast<std::size_t>(sy) * w + sx) * c;
          const std::size_t koff = (static_cast<std::size_t>(dy) * geom.kernel_w + dx) * c;
          for (int ci = 0; ci < c; ++ci) {
            gin[poff + ci] += gorow[ci] * km[koff + ci];
            gk[koff + ci] += src[poff + ci] * gorow[ci];
          }
        }
      }
    }
  }
  return g;
}

Tensor pointwise_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  require_rank(input, 3, "pointwise input");
  require_rank(kernel, 2, "pointwise kernel");
  require_rank(bias, 1, "pointwise bias");
  const int cin = input.dim(2), cout = kernel.dim(1);
  if (kernel.dim(0) != cin || bias.dim(0) != cout) {
    throw ShapeError("pointwise channel mismatch: input " + input.shape_str() + " vs kernel " +
                     kernel.shape_str() + " / bias " + bias.shape_str());
  }
  const std::size_t pixels = static_cast<std::size_t>(input.dim(0)) * input.dim(1);
  Tensor out({input.dim(0), input.dim(1), cout});
  const double* src = input.data();
  const double* km = kernel.data();
  const double* b = bias.data();
  double* o = out.data();
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* x = src + p * cin;
    double* orow = o + p * cout;
    for (int co = 0; co < cout; ++co) orow[co] = b[co];
    for (int ci = 0; ci < cin; ++ci) {
      const double a = x[ci];
      const double* krow = km + static_cast<std::size_t>(ci) * cout;
      for (int co = 0; co < cout; ++co) orow[co] += a * krow[co];
    }
  }
  return out;
}

ConvGrads pointwise_conv2d_backward(const Tensor& input, const Tensor& kernel,
                                    const Tensor& grad_out) {
  const int cin = input.dim(2), cout = kernel.dim(1);
  if (grad_out.rank() != 3 || grad_out.dim(0) != input.dim(0) ||
      grad_out.dim(1) != input.dim(1) || grad_out.dim(2) != cout) {
    throw ShapeError("pointwise grad_out " + grad_out.shape_str() + " does not match output " +
                     shape_str({input.dim(0), input.dim(1), cout}));
  }
  const std::size_t pixels = static_cast<std::size_t>(input.dim(0)) * input.dim(1);
  ConvGrads g;
  g.input = Tensor(input.shape());
  g.kernel = Tensor(kernel.shape());
  g.bias = Tensor({cout});
  const double* src = input.data();
  const double* km = kernel.data();
  const double* go = grad_out.data();
  double* gin = g.input.data();
  double* gk = g.kernel.data();
  double* gb = g.bias.data();
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* x = src + p * cin;
    const double* gorow = go + p * cout;
    double* girow = gin + p * cin;
    for (int co = 0; co < cout; ++co) gb[co] += gorow[co];
    for (int ci = 0; ci < cin; ++ci) {
      const double a = x[ci];
      const double* krow = km + static_cast<std::size_t>(ci) * cout;
      double* gkrow = gk + static_cast<std::size_t>(ci) * cout;
      double acc = 0.0;
      for (int co = 0; co < cout; ++co) {
        gkrow[co] += a * gorow[co];
        acc += krow[co] * gorow[co];
      }
      girow[ci] = acc;
    }
  }
  return g;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(input, 1, "dense input");
  require_rank(weights, 2, "dense weights");
  require_rank(bias, 1, "dense bias");
  const int n = weights.dim(0), m = weights.dim(1);
  if (input.dim(0) != n || bias.dim(0) != m) {
    throw ShapeError("dense dimension mismatch: input " + input.shape_str() + " vs weights " +
                     weights.shape_str() + " / bias " + bias.shape_str());
  }
  Tensor out({m});
  double* o = out.data();
  for (int j = 0; j < m; ++j) o[j] = bias[static_cast<std::size_t>(j)];
  const double* x = input.data();
  const double* wm = weights.data();
  for (int i = 0; i < n; ++i) {
    const double a = x[i];
    const double* wrow = wm + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) o[j] += a * wrow[j];
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out) {
  const int n = weights.dim(0), m = weights.dim(1);
  if (grad_out.rank() != 1 || grad_out.dim(0) != m) {
    throw ShapeError("dense grad_out " + grad_out.shape_str() + " does not match output length " +
                     std::to_string(m));
  }
  DenseGrads g;
  g.input = Tensor({n});
  g.weights = Tensor(weights.shape());
  g.bias = grad_out;
  const double* x = input.data();
  const double* wm = weights.data();
  const double* go = grad_out.data();
  double* gin = g.input.data();
  double* gw = g.weights.data();
  for (int i = 0; i < n; ++i) {
    const double a = x[i];
    const double* wrow = wm + static_cast<std::size_t>(i) * m;
    double* gwrow = gw + static_cast<std::size_t>(i) * m;
    double acc = 0.0;
    for (int j = 0; j < m; ++j) {
      gwrow[j] = a * go[j];
      acc += wrow[j] * go[j];
    }
    gin[i] = acc;
  }
  return g;
}

namespace {

int channel_count(const Tensor& t) { return t.dim(t.rank() - 1); }

void require_bn_params(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                       const Tensor& mean, const Tensor& var, double eps) {
  const int c = channel_count(input);
  for (const Tensor* p : {&gamma, &beta, &mean, &var}) {
    if (p->rank() != 1 || p->dim(0) != c) {
      throw ShapeError("batchnorm parameter " + p->shape_str() + " does not match channels " +
                       std::to_string(c) + " of input " + input.shape_str());
    }
  }
  if (eps < 0.0) throw ShapeError("batchnorm eps must be non-negative");
  for (std::size_t i = 0; i < var.size(); ++i) {
    if (var[i] < 0.0) {
      throw ShapeError("batchnorm variance must be non-negative, got " + std::to_string(var[i]) +
                       " at channel " + std::to_string(i));
    }
  }
}

}  // namespace

Tensor batchnorm_infer(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                       const Tensor& running_mean, const Tensor& running_var, double eps) {
  require_bn_params(input, gamma, beta, running_mean, running_var, eps);
  const int c = channel_count(input);
  std::vector<double> scale(c), shift(c);
  for (int i = 0; i < c; ++i) {
    const double s = gamma[static_cast<std::size_t>(i)] /
                     std::sqrt(running_var[static_cast<std::size_t>(i)] + eps);
    scale[i] = s;
    shift[i] = beta[static_cast<std::size_t>(i)] - running_mean[static_cast<std::size_t>(i)] * s;
  }
  Tensor out(input.shape());
  const double* x = input.data();
  double* o = out.data();
  const std::size_t n = input.size();
  for (std::size_t i = 0; i < n; ++i) {
    const int ci = static_cast<int>(i % c);
    o[i] = x[i] * scale[ci] + shift[ci];
  }
  return out;
}

BatchnormGrads batchnorm_infer_backward(const Tensor& input, const Tensor& gamma,
                                        const Tensor& running_mean, const Tensor& running_var,
                                        double eps, const Tensor& grad_out) {
  if (!grad_out.same_shape(input)) {
    throw ShapeError("batchnorm grad_out " + grad_out.shape_str() + " vs input " +
                     input.shape_str());
  }
  const int c = channel_count(input);
  std::vector<double> inv_std(c);
  for (int i = 0; i < c; ++i) {
    inv_std[i] = 1.0 / std::sqrt(running_var[static_cast<std::size_t>(i)] + eps);
  }
  BatchnormGrads g;
  g.input = Tensor(input.shape());
  g.gamma = Tensor({c});
  g.beta = Tensor({c});
  const double* x = input.data();
  const double* go = grad_out.data();
  double* gin = g.input.data();
  const std::size_t n = input.size();
  for (std::size_t i = 0; i < n; ++i) {
    const int ci = static_cast<int>(i % c);
    gin[i] = go[i] * gamma[static_cast<std::size_t>(ci)] * inv_std[ci];
    g.gamma[static_cast<std::size_t>(ci)] +=
        go[i] * (x[i] - running_mean[static_cast<std::size_t>(ci)]) * inv_std[ci];
    g.beta[static_cast<std::size_t>(ci)] += go[i];
  }
  return g;
}

Tensor activation(const Tensor& input, ActKind kind) {
  Tensor out(input.shape());
  const double* x = input.data();
  double* o = out.data();
  const std::size_t n = input.size();
  if (kind == ActKind::relu) {
    for (std::size_t i = 0; i < n; ++i) o[i] = x[i] > 0.0 ? x[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < n; ++i) o[i] = std::clamp(x[i], 0.0, 6.0);
  }
  return out;
}

Tensor activation_backward(const Tensor& input, ActKind kind, const Tensor& grad_out) {
  if (!grad_out.same_shape(input)) {
    throw ShapeError("activation grad_out " + grad_out.shape_str() + " vs input " +
                     input.shape_str());
  }
  Tensor g(input.shape());
  const double* x = input.data();
  const double* go = grad_out.data();
  double* o = g.data();
  const std::size_t n = input.size();
  if (kind == ActKind::relu) {
    for (std::size_t i = 0; i < n; ++i) o[i] = x[i] > 0.0 ? go[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < n; ++i) o[i] = (x[i] > 0.0 && x[i] < 6.0) ? go[i] : 0.0;
  }
  return g;
}

Tensor pool(const Tensor& input, PoolKind kind, const ConvGeometry& geom) {
  require_rank(input, 3, "pool input");
  const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (kind == PoolKind::global_avg) {
    Tensor out({c});
    const double* x = input.data();
    const std::size_t pixels = static_cast<std::size_t>(h) * w;
    for (std::size_t p = 0; p < pixels; ++p) {
      for (int ci = 0; ci < c; ++ci) out[static_cast<std::size_t>(ci)] += x[p * c + ci];
    }
    for (int ci = 0; ci < c; ++ci) out[static_cast<std::size_t>(ci)] /= static_cast<double>(pixels);
    return out;
  }
  const OutPlan plan = plan_output(h, w, geom);
  Tensor out({plan.out_h, plan.out_w, c});
  const double* x = input.data();
  double* o = out.data();
  const double window = static_cast<double>(geom.kernel_h) * geom.kernel_w;
  for (int oy = 0; oy < plan.out_h; ++oy) {
    for (int ox = 0; ox < plan.out_w; ++ox) {
      double* orow = o + (static_cast<std::size_t>(oy) * plan.out_w + ox) * c;
      for (int ci = 0; ci < c; ++ci) {
        double best = -std::numeric_limits<double>::infinity();
        double sum = 0.0;
        bool any = false;
        for (int dy = 0; dy < geom.kernel_h; ++dy) {
          const int sy = oy * geom.stride + dy - plan.pad.top;
          if (sy < 0 || sy >= h) continue;
          for (int dx = 0; dx < geom.kernel_w; ++dx) {
            const int sx = ox * geom.stride + dx - plan.pad.left;
            if (sx < 0 || sx >= w) continue;
            const double v = x[(static_cast<std::size_t>(sy) * w + sx) * c + ci];
            sum += v;
            if (!any || v > best) best = v;
            any = true;
          }
        }
        if (kind == PoolKind::max) {
          orow[ci] = any ? best : 0.0;
        } else {
          orow[ci] = sum / window;
        }
      }
    }
  }
  return out;
}

Tensor pool_backward(const Tensor& input, PoolKind kind, const ConvGeometry& geom,
                     const Tensor& grad_out) {
  const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
  Tensor gin(input.shape());
  const double* x = input.data();
  const double* go = grad_out.data();
  double* gi = gin.data();
  if (kind == PoolKind::global_avg) {
    if (grad_out.rank() != 1 || grad_out.dim(0) != c) {
      throw ShapeError("global_avg grad_out " + grad_out.shape_str() + " vs channels " +
                       std::to_string(c));
    }
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) {
      for (int ci = 0; ci < c; ++ci) gi[p * c + ci] = go[ci] * inv;
    }
    return gin;
  }
  const OutPlan plan = plan_output(h, w, geom);
  if (grad_out.rank() != 3 || grad_out.dim(0) != plan.out_h || grad_out.dim(1) != plan.out_w ||
      grad_out.dim(2) != c) {
    throw ShapeError("pool grad_out " + grad_out.shape_str() + " does not match output " +
                     shape_str({plan.out_h, plan.out_w, c}));
  }
  const double inv_window = 1.0 / (static_cast<double>(geom.kernel_h) * geom.kernel_w);
  for (int oy = 0; oy < plan.out_h; ++oy) {
    for (int ox = 0; ox < plan.out_w; ++ox) {
      const double* gorow = go + (static_cast<std::size_t>(oy) * plan.out_w + ox) * c;
      for (int ci = 0; ci < c; ++ci) {
        if (kind == PoolKind::avg) {
          for (int dy = 0; dy < geom.kernel_h; ++dy) {
            const int sy = oy * geom.stride + dy - plan.pad.top;
            if (sy < 0 || sy >= h) continue;
            for (int dx = 0; dx < geom.kernel_w; ++dx) {
              const int sx = ox * geom.stride + dx - plan.pad.left;
              if (sx < 0 || sx >= w) continue;
              gi[(static_cast<std::size_t>(sy) * w + sx) * c + ci] += gorow[ci] * inv_window;
            }
          }
        } else {
          // Recompute the argmax; ties go to the first window position in
          // scan order, matching the forward pass.
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_off = 0;
          bool any = false;
          for (int dy = 0; dy < geom.kernel_h; ++dy) {
            const int sy = oy * geom.stride + dy - plan.pad.top;
            if (sy < 0 || sy >= h) continue;
            for (int dx = 0; dx < geom.kernel_w; ++dx) {
              const int sx = ox * geom.stride + dx - plan.pad.left;
              if (sx < 0 || sx >= w) continue;
              const std::size_t off = (static_cast<std::size_t>(sy) * w + sx) * c + ci;
              if (!any || x[off] > best) {
                best = x[off];
                best_off = off;
                any = true;
              }
            }
          }
          if (any) gi[best_off] += gorow[ci];
        }
      }
    }
  }
  return gin;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1 || logits.dim(0) < 1) {
    throw ShapeError("softmax needs a non-empty rank-1 tensor, got " + logits.shape_str());
  }
  const int k = logits.dim(0);
  double mx = logits[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, logits[static_cast<std::size_t>(i)]);
  Tensor out({k});
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    const double e = std::exp(logits[static_cast<std::size_t>(i)] - mx);
    out[static_cast<std::size_t>(i)] = e;
    sum += e;
  }
  for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] /= sum;
  return out;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& grad_out) {
  if (!grad_out.same_shape(probs)) {
    throw ShapeError("softmax grad_out " + grad_out.shape_str() + " vs probs " +
                     probs.shape_str());
  }
  const int k = probs.dim(0);
  double dot = 0.0;
  for (int i = 0; i < k; ++i) {
    dot += probs[static_cast<std::size_t>(i)] * grad_out[static_cast<std::size_t>(i)];
  }
  Tensor g({k});
  for (int i = 0; i < k; ++i) {
    g[static_cast<std::size_t>(i)] =
        probs[static_cast<std::size_t>(i)] * (grad_out[static_cast<std::size_t>(i)] - dot);
  }
  return g;
}

double cross_entropy(const Tensor& probs, const Tensor& one_hot) {
  if (!probs.same_shape(one_hot) || probs.rank() != 1) {
    throw ShapeError("cross_entropy probs " + probs.shape_str() + " vs label " +
                     one_hot.shape_str());
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (one_hot[i] != 0.0) loss -= one_hot[i] * std::log(std::max(probs[i], kLogClip));
  }
  return loss;
}

Tensor cross_entropy_backward(const Tensor& probs, const Tensor& one_hot) {
  if (!probs.same_shape(one_hot)) {
    throw ShapeError("cross_entropy probs " + probs.shape_str() + " vs label " +
                     one_hot.shape_str());
  }
  Tensor g(probs.shape());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    g[i] = probs[i] > kLogClip ? -one_hot[i] / probs[i] : 0.0;
  }
  return g;
}

double softmax_xent(const Tensor& logits, const Tensor& one_hot, Tensor* probs_out) {
  Tensor probs = softmax(logits);
  const double loss = cross_entropy(probs, one_hot);
  if (probs_out) *probs_out = std::move(probs);
  return loss;
}

Tensor softmax_xent_backward(const Tensor& probs, const Tensor& one_hot) {
  if (!probs.same_shape(one_hot)) {
    throw ShapeError("softmax_xent probs " + probs.shape_str() + " vs label " +
                     one_hot.shape_str());
  }
  Tensor g(probs.shape());
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = probs[i] - one_hot[i];
  return g;
}

Tensor residual_add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("residual_add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1)) {
    throw ShapeError("concat needs matching spatial dims: " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  const int h = a.dim(0), w = a.dim(1), ca = a.dim(2), cb = b.dim(2);
  Tensor out({h, w, ca + cb});
  const double* pa = a.data();
  const double* pb = b.data();
  double* o = out.data();
  const std::size_t pixels = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < pixels; ++p) {
    std::memcpy(o + p * (ca + cb), pa + p * ca, sizeof(double) * ca);
    std::memcpy(o + p * (ca + cb) + ca, pb + p * cb, sizeof(double) * cb);
  }
  return out;
}

}  // namespace bnk
