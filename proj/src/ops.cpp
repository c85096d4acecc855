#include <algorithm>
#include <array>
#include <cmath>
#include <span>

#include "mumodig/tensor.hpp"

namespace mumodig {

namespace {

void check_same_shape(const char* kind, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw TensorError(std::string(kind) + ": shape mismatch " + shape_to_string(a.shape()) +
                      " vs " + shape_to_string(b.shape()));
  }
}

void check_image(const char* kind, const Tensor& a) {
  if (a.shape().size() != 3) {
    throw TensorError(std::string(kind) + ": expected {C,H,W}, got " +
                      shape_to_string(a.shape()));
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  std::array<Tensor, 2> ins{a, b};
  return make_result(a.shape(), std::move(out), "add", ins,
                     [](const OpNode&, const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gi) {
                       for (int k = 0; k < 2; ++k) {
                         if (!gi[k]) continue;
                         for (std::size_t i = 0; i < g.size(); ++i) (*gi[k])[i] += g[i];
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  std::array<Tensor, 2> ins{a, b};
  return make_result(a.shape(), std::move(out), "sub", ins,
                     [](const OpNode&, const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gi) {
                       if (gi[0]) {
                         for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                       }
                       if (gi[1]) {
                         for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  std::array<Tensor, 2> ins{a, b};
  return make_result(a.shape(), std::move(out), "mul", ins,
                     [](const OpNode& node, const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gi) {
                       const auto& av = node.inputs[0]->values;
                       const auto& bv = node.inputs[1]->values;
                       if (gi[0]) {
                         for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * bv[i];
                       }
                       if (gi[1]) {
                         for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += g[i] * av[i];
                       }
                     });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * factor;
  std::array<Tensor, 1> ins{a};
  return make_result(a.shape(), std::move(out), "scale", ins,
                     [factor](const OpNode&, const std::vector<double>& g,
                              const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * factor;
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
    throw TensorError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " x " +
                      shape_to_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  std::array<Tensor, 2> ins{a, b};
  return make_result({m, n}, std::move(out), "matmul", ins,
                     [m, k, n](const OpNode& node, const std::vector<double>& g,
                               const std::vector<std::vector<double>*>& gi) {
                       const auto& av = node.inputs[0]->values;
                       const auto& bv = node.inputs[1]->values;
                       if (gi[0]) {  // dA = g . B^T
                         auto& da = *gi[0];
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) {
                             const double gij = g[i * n + j];
                             for (std::size_t p = 0; p < k; ++p)
                               da[i * k + p] += gij * bv[p * n + j];
                           }
                       }
                       if (gi[1]) {  // dB = A^T . g
                         auto& db = *gi[1];
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double aip = av[i * k + p];
                             for (std::size_t j = 0; j < n; ++j)
                               db[p * n + j] += aip * g[i * n + j];
                           }
                       }
                     });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias,
              std::size_t stride, std::size_t padding) {
  check_image("conv2d", input);
  if (kernel.shape().size() != 4 || kernel.shape()[1] != input.shape()[0]) {
    throw TensorError("conv2d: kernel " + shape_to_string(kernel.shape()) +
                      " incompatible with input " + shape_to_string(input.shape()));
  }
  if (stride == 0) throw TensorError("conv2d: stride must be >= 1");
  const std::size_t cin = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const std::size_t cout = kernel.shape()[0], kh = kernel.shape()[2], kw = kernel.shape()[3];
  if (h + 2 * padding < kh || w + 2 * padding < kw) {
    throw TensorError("conv2d: kernel " + shape_to_string(kernel.shape()) +
                      " larger than padded input " + shape_to_string(input.shape()));
  }
  if (bias && bias->shape() != std::vector<std::size_t>{cout}) {
    throw TensorError("conv2d: bias " + shape_to_string(bias->shape()) + " wants (" +
                      std::to_string(cout) + ")");
  }
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kw) / stride + 1;

  std::vector<double> out(cout * oh * ow, 0.0);
  const double* in = input.values().data();
  const double* kv = kernel.values().data();
  const long p = static_cast<long>(padding);
  for (std::size_t co = 0; co < cout; ++co) {
    const double b = bias ? bias->values()[co] : 0.0;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = b;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* in_c = in + ci * h * w;
          const double* k_c = kv + ((co * cin + ci) * kh) * kw;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const long iy = static_cast<long>(oy * stride + ky) - p;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long ix = static_cast<long>(ox * stride + kx) - p;
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              acc += in_c[iy * static_cast<long>(w) + ix] * k_c[ky * kw + kx];
            }
          }
        }
        out[(co * oh + oy) * ow + ox] = acc;
      }
    }
  }

  std::vector<Tensor> ins{input, kernel};
  if (bias) ins.push_back(*bias);
  auto backward = [cin, h, w, cout, kh, kw, oh, ow, stride, p](
                      const OpNode& node, const std::vector<double>& g,
                      const std::vector<std::vector<double>*>& gi) {
    const auto& in = node.inputs[0]->values;
    const auto& kv = node.inputs[1]->values;
    std::vector<double>* din = gi[0];
    std::vector<double>* dk = gi[1];
    std::vector<double>* db = (gi.size() > 2) ? gi[2] : nullptr;
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double go = g[(co * oh + oy) * ow + ox];
          if (db) (*db)[co] += go;
          if (!din && !dk) continue;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const std::size_t in_base = ci * h * w;
            const std::size_t k_base = ((co * cin + ci) * kh) * kw;
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const long iy = static_cast<long>(oy * stride + ky) - p;
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long ix = static_cast<long>(ox * stride + kx) - p;
                if (ix < 0 || ix >= static_cast<long>(w)) continue;
                const std::size_t ii = in_base + iy * w + ix;
                const std::size_t ki = k_base + ky * kw + kx;
                if (din) (*din)[ii] += go * kv[ki];
                if (dk) (*dk)[ki] += go * in[ii];
              }
            }
          }
        }
      }
    }
  };
  return make_result({cout, oh, ow}, std::move(out), "conv2d",
                     std::span<const Tensor>(ins.data(), ins.size()), std::move(backward));
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.values()[i]);
  std::array<Tensor, 1> ins{a};
  return make_result(a.shape(), std::move(out), "relu", ins,
                     [](const OpNode& node, const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       const auto& x = node.inputs[0]->values;
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (x[i] > 0.0) (*gi[0])[i] += g[i];
                       }
                     });
}

Tensor softplus(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.values()[i];
    out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  std::array<Tensor, 1> ins{a};
  return make_result(a.shape(), std::move(out), "softplus", ins,
                     [](const OpNode& node, const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       const auto& x = node.inputs[0]->values;
                       for (std::size_t i = 0; i < g.size(); ++i)
                         (*gi[0])[i] += g[i] * sigmoid(x[i]);
                     });
}

namespace {

// Half-pixel-center source coordinate, clamped to the valid range.
struct ResampleCoord {
  std::size_t lo, hi;
  double frac;
};

ResampleCoord resample_coord(std::size_t out_i, std::size_t out_n, std::size_t in_n) {
  double s = (static_cast<double>(out_i) + 0.5) * static_cast<double>(in_n) /
                 static_cast<double>(out_n) -
             0.5;
  s = std::max(0.0, std::min(s, static_cast<double>(in_n - 1)));
  const std::size_t lo = static_cast<std::size_t>(s);
  const std::size_t hi = std::min(lo + 1, in_n - 1);
  return {lo, hi, s - static_cast<double>(lo)};
}

}  // namespace

Tensor bilinear_resize(const Tensor& a, std::size_t out_h, std::size_t out_w) {
  check_image("bilinear_resize", a);
  if (out_h == 0 || out_w == 0) throw TensorError("bilinear_resize: zero output extent");
  const std::size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
  std::vector<double> out(c * out_h * out_w);
  const double* in = a.values().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* in_c = in + ch * h * w;
    double* out_c = out.data() + ch * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const ResampleCoord ry = resample_coord(oy, out_h, h);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const ResampleCoord rx = resample_coord(ox, out_w, w);
        const double v00 = in_c[ry.lo * w + rx.lo];
        const double v01 = in_c[ry.lo * w + rx.hi];
        const double v10 = in_c[ry.hi * w + rx.lo];
        const double v11 = in_c[ry.hi * w + rx.hi];
        out_c[oy * out_w + ox] = (1.0 - ry.frac) * ((1.0 - rx.frac) * v00 + rx.frac * v01) +
                                 ry.frac * ((1.0 - rx.frac) * v10 + rx.frac * v11);
      }
    }
  }
  std::array<Tensor, 1> ins{a};
  return make_result({c, out_h, out_w}, std::move(out), "bilinear_resize", ins,
                     [c, h, w, out_h, out_w](const OpNode&, const std::vector<double>& g,
                                             const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       auto& din = *gi[0];
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         double* d_c = din.data() + ch * h * w;
                         const double* g_c = g.data() + ch * out_h * out_w;
                         for (std::size_t oy = 0; oy < out_h; ++oy) {
                           const ResampleCoord ry = resample_coord(oy, out_h, h);
                           for (std::size_t ox = 0; ox < out_w; ++ox) {
                             const ResampleCoord rx = resample_coord(ox, out_w, w);
                             const double go = g_c[oy * out_w + ox];
                             d_c[ry.lo * w + rx.lo] += go * (1.0 - ry.frac) * (1.0 - rx.frac);
                             d_c[ry.lo * w + rx.hi] += go * (1.0 - ry.frac) * rx.frac;
                             d_c[ry.hi * w + rx.lo] += go * ry.frac * (1.0 - rx.frac);
                             d_c[ry.hi * w + rx.hi] += go * ry.frac * rx.frac;
                           }
                         }
                       }
                     });
}

Tensor pad(const Tensor& a, std::size_t top, std::size_t bottom, std::size_t left,
           std::size_t right) {
  check_image("pad", a);
  const std::size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
  const std::size_t oh = h + top + bottom, ow = w + left + right;
  std::vector<double> out(c * oh * ow, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[(ch * oh + y + top) * ow + x + left] = a.values()[(ch * h + y) * w + x];
  std::array<Tensor, 1> ins{a};
  return make_result({c, oh, ow}, std::move(out), "pad", ins,
                     [c, h, w, oh, ow, top, left](const OpNode&, const std::vector<double>& g,
                                                  const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       auto& din = *gi[0];
                       for (std::size_t ch = 0; ch < c; ++ch)
                         for (std::size_t y = 0; y < h; ++y)
                           for (std::size_t x = 0; x < w; ++x)
                             din[(ch * h + y) * w + x] +=
                                 g[(ch * oh + y + top) * ow + x + left];
                     });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw TensorError("mean: empty tensor");
  double s = 0.0;
  for (double v : a.values()) s += v;
  const double n = static_cast<double>(a.size());
  std::array<Tensor, 1> ins{a};
  return make_result({1}, {s / n}, "mean", ins,
                     [n](const OpNode&, const std::vector<double>& g,
                         const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       const double gv = g[0] / n;
                       for (double& d : *gi[0]) d += gv;
                     });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.values()[i];
    if (x <= 0.0) {
      throw TensorError("log: non-positive element " + std::to_string(x) + " at index " +
                        std::to_string(i));
    }
    out[i] = std::log(x);
  }
  std::array<Tensor, 1> ins{a};
  return make_result(a.shape(), std::move(out), "log", ins,
                     [](const OpNode& node, const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       const auto& x = node.inputs[0]->values;
                       for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] / x[i];
                     });
}

Tensor softmax(const Tensor& a) {
  if (a.shape().size() != 1) {
    throw TensorError("softmax: expected 1-D logits, got " + shape_to_string(a.shape()));
  }
  const double m = max_value(a);
  std::vector<double> out(a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(a.values()[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
  std::array<Tensor, 1> ins{a};
  return make_result(a.shape(), std::move(out), "softmax", ins,
                     [](const OpNode& node, const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       const auto& y = node.output->values;
                       double gy = 0.0;
                       for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
                       for (std::size_t i = 0; i < g.size(); ++i)
                         (*gi[0])[i] += y[i] * (g[i] - gy);
                     });
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> new_shape) {
  std::size_t n = 1;
  for (std::size_t d : new_shape) n *= d;
  if (n != a.size()) {
    throw TensorError("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                      shape_to_string(new_shape));
  }
  std::array<Tensor, 1> ins{a};
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(new_shape), std::move(out), "reshape", ins,
                     [](const OpNode&, const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                     });
}

namespace {

// One output pixel of the inverse-mapped affine grid: up to four bilinear
// taps into the source image.
struct AffineTaps {
  long y0, x0;
  double fy, fx;
};

struct AffineGeometry {
  double cy, cx, ty, tx, cos_t, sin_t, scale;

  AffineGeometry(std::size_t h, std::size_t w, double angle_deg, double ty_frac, double tx_frac,
                 double scale_factor)
      : cy(static_cast<double>(h - 1) / 2.0),
        cx(static_cast<double>(w - 1) / 2.0),
        ty(ty_frac * static_cast<double>(h)),
        tx(tx_frac * static_cast<double>(w)),
        cos_t(std::cos(angle_deg * M_PI / 180.0)),
        sin_t(std::sin(angle_deg * M_PI / 180.0)),
        scale(scale_factor) {}

  AffineTaps taps(std::size_t oy, std::size_t ox) const {
    const double ry = static_cast<double>(oy) - cy - ty;
    const double rx = static_cast<double>(ox) - cx - tx;
    const double sy = (cos_t * ry - sin_t * rx) / scale + cy;
    const double sx = (sin_t * ry + cos_t * rx) / scale + cx;
    const long y0 = static_cast<long>(std::floor(sy));
    const long x0 = static_cast<long>(std::floor(sx));
    return {y0, x0, sy - static_cast<double>(y0), sx - static_cast<double>(x0)};
  }
};

}  // namespace

Tensor affine_warp(const Tensor& a, double angle_deg, double translate_y_frac,
                   double translate_x_frac, double scale_factor) {
  check_image("affine_warp", a);
  if (scale_factor <= 0.0) throw TensorError("affine_warp: scale must be positive");
  const std::size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
  const AffineGeometry geom(h, w, angle_deg, translate_y_frac, translate_x_frac, scale_factor);

  std::vector<double> out(a.size(), 0.0);
  const double* src = a.values().data();
  auto in_bounds = [h, w](long y, long x) {
    return y >= 0 && y < static_cast<long>(h) && x >= 0 && x < static_cast<long>(w);
  };
  for (std::size_t oy = 0; oy < h; ++oy) {
    for (std::size_t ox = 0; ox < w; ++ox) {
      const AffineTaps t = geom.taps(oy, ox);
      const double w00 = (1.0 - t.fy) * (1.0 - t.fx), w01 = (1.0 - t.fy) * t.fx;
      const double w10 = t.fy * (1.0 - t.fx), w11 = t.fy * t.fx;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* s = src + ch * h * w;
        double v = 0.0;
        if (in_bounds(t.y0, t.x0)) v += w00 * s[t.y0 * w + t.x0];
        if (in_bounds(t.y0, t.x0 + 1)) v += w01 * s[t.y0 * w + t.x0 + 1];
        if (in_bounds(t.y0 + 1, t.x0)) v += w10 * s[(t.y0 + 1) * w + t.x0];
        if (in_bounds(t.y0 + 1, t.x0 + 1)) v += w11 * s[(t.y0 + 1) * w + t.x0 + 1];
        out[(ch * h + oy) * w + ox] = v;
      }
    }
  }
  std::array<Tensor, 1> ins{a};
  return make_result(a.shape(), std::move(out), "affine_warp", ins,
                     [c, h, w, geom](const OpNode&, const std::vector<double>& g,
                                     const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       auto& din = *gi[0];
                       auto in_bounds = [h, w](long y, long x) {
                         return y >= 0 && y < static_cast<long>(h) && x >= 0 &&
                                x < static_cast<long>(w);
                       };
                       for (std::size_t oy = 0; oy < h; ++oy) {
                         for (std::size_t ox = 0; ox < w; ++ox) {
                           const AffineTaps t = geom.taps(oy, ox);
                           const double w00 = (1.0 - t.fy) * (1.0 - t.fx);
                           const double w01 = (1.0 - t.fy) * t.fx;
                           const double w10 = t.fy * (1.0 - t.fx), w11 = t.fy * t.fx;
                           for (std::size_t ch = 0; ch < c; ++ch) {
                             const double go = g[(ch * h + oy) * w + ox];
                             double* d = din.data() + ch * h * w;
                             if (in_bounds(t.y0, t.x0)) d[t.y0 * w + t.x0] += go * w00;
                             if (in_bounds(t.y0, t.x0 + 1)) d[t.y0 * w + t.x0 + 1] += go * w01;
                             if (in_bounds(t.y0 + 1, t.x0)) d[(t.y0 + 1) * w + t.x0] += go * w10;
                             if (in_bounds(t.y0 + 1, t.x0 + 1))
                               d[(t.y0 + 1) * w + t.x0 + 1] += go * w11;
                           }
                         }
                       }
                     });
}

Tensor box_blur(const Tensor& a, std::size_t kernel_size) {
  check_image("box_blur", a);
  if (kernel_size < 3 || kernel_size % 2 == 0) {
    throw TensorError("box_blur: kernel_size must be odd and >= 3, got " +
                      std::to_string(kernel_size));
  }
  const std::size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
  const long r = static_cast<long>(kernel_size / 2);
  auto neighbor_count = [h, w, r](long y, long x) {
    const long ys = std::min<long>(y + r, static_cast<long>(h) - 1) - std::max<long>(y - r, 0) + 1;
    const long xs = std::min<long>(x + r, static_cast<long>(w) - 1) - std::max<long>(x - r, 0) + 1;
    return static_cast<double>(ys * xs);
  };

  std::vector<double> out(a.size(), 0.0);
  const double* src = a.values().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (long y = 0; y < static_cast<long>(h); ++y) {
      for (long x = 0; x < static_cast<long>(w); ++x) {
        double acc = 0.0;
        for (long dy = -r; dy <= r; ++dy) {
          const long sy = y + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          for (long dx = -r; dx <= r; ++dx) {
            const long sx = x + dx;
            if (sx < 0 || sx >= static_cast<long>(w)) continue;
            acc += src[(ch * h + sy) * w + sx];
          }
        }
        out[(ch * h + y) * w + x] = acc / neighbor_count(y, x);
      }
    }
  }
  std::array<Tensor, 1> ins{a};
  return make_result(a.shape(), std::move(out), "box_blur", ins,
                     [c, h, w, r, neighbor_count](const OpNode&, const std::vector<double>& g,
                                                  const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       auto& din = *gi[0];
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         for (long y = 0; y < static_cast<long>(h); ++y) {
                           for (long x = 0; x < static_cast<long>(w); ++x) {
                             const double go =
                                 g[(ch * h + y) * w + x] / neighbor_count(y, x);
                             for (long dy = -r; dy <= r; ++dy) {
                               const long sy = y + dy;
                               if (sy < 0 || sy >= static_cast<long>(h)) continue;
                               for (long dx = -r; dx <= r; ++dx) {
                                 const long sx = x + dx;
                                 if (sx < 0 || sx >= static_cast<long>(w)) continue;
                                 din[(ch * h + sy) * w + sx] += go;
                               }
                             }
                           }
                         }
                       }
                     });
}

Tensor clip01(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(a.values()[i], 0.0, 1.0);
  }
  std::array<Tensor, 1> ins{a};
  return make_result(a.shape(), std::move(out), "clip01", ins,
                     [](const OpNode& node, const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       const auto& x = node.inputs[0]->values;
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (x[i] > 0.0 && x[i] < 1.0) (*gi[0])[i] += g[i];
                       }
                     });
}

Tensor pick(const Tensor& a, std::size_t flat_index) {
  if (flat_index >= a.size()) {
    throw TensorError("pick: index " + std::to_string(flat_index) + " out of range for " +
                      shape_to_string(a.shape()));
  }
  std::array<Tensor, 1> ins{a};
  return make_result({1}, {a.values()[flat_index]}, "pick", ins,
                     [flat_index](const OpNode&, const std::vector<double>& g,
                                  const std::vector<std::vector<double>*>& gi) {
                       if (!gi[0]) return;
                       (*gi[0])[flat_index] += g[0];
                     });
}

}  // namespace mumodig
