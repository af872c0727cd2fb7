#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>
#include <vector>

#include "enfnet/tensor.hpp"

namespace enfnet {

enum class Padding { Explicit, Same, Valid };

/// Geometry of a (transposed) convolution. SAME resolves to k/2 for odd
/// kernels; output_padding applies to transposed convolution only and must
/// stay below the stride.
struct ConvSpec {
  int kh = 3, kw = 3;
  int sh = 1, sw = 1;
  Padding pad = Padding::Same;
  int ph = 0, pw = 0;    // used when pad == Explicit
  int oph = 0, opw = 0;  // transposed conv only

  static ConvSpec same(int k, int s = 1) {
    ConvSpec c;
    c.kh = c.kw = k;
    c.sh = c.sw = s;
    c.pad = Padding::Same;
    return c;
  }
  static ConvSpec valid(int k, int s = 1) {
    ConvSpec c;
    c.kh = c.kw = k;
    c.sh = c.sw = s;
    c.pad = Padding::Valid;
    return c;
  }
  static ConvSpec explicit_pad(int k, int s, int p, int op = 0) {
    ConvSpec c;
    c.kh = c.kw = k;
    c.sh = c.sw = s;
    c.pad = Padding::Explicit;
    c.ph = c.pw = p;
    c.oph = c.opw = op;
    return c;
  }

  /// Resolved padding (pair ph, pw). SAME requires odd kernels.
  std::pair<int, int> padding() const {
    switch (pad) {
      case Padding::Explicit:
        return {ph, pw};
      case Padding::Valid:
        return {0, 0};
      case Padding::Same:
        if (kh % 2 == 0 || kw % 2 == 0)
          throw ValidationError("ConvSpec: SAME padding requires odd kernels, got " +
                                std::to_string(kh) + "x" + std::to_string(kw));
        return {kh / 2, kw / 2};
    }
    return {0, 0};
  }

  void validate() const {
    require(kh > 0 && kw > 0, "ConvSpec: kernel must be positive");
    require(sh > 0 && sw > 0, "ConvSpec: stride must be positive");
    require(oph >= 0 && opw >= 0, "ConvSpec: output_padding must be nonnegative");
    require(oph < sh && opw < sw, "ConvSpec: output_padding must be smaller than stride");
    (void)padding();
  }
};

inline int conv_out_size(int in, int k, int s, int p) {
  return (in + 2 * p - k) / s + 1;
}

inline int conv_transpose_out_size(int in, int k, int s, int p, int op) {
  return (in - 1) * s - 2 * p + k + op;
}

namespace detail {

// Shared gather core: out[n,a,oy,ox] (+)= sum_{b,ky,kx} w[a,b,ky,kx] * in[n,b,iy,ix]
// with iy = oy*sh - ph + ky (zero padding). Accumulator rows are blocked over
// the leading weight axis so the inner width loop stays in registers/L1.
inline void correlate_gather(const Tensor& in, const Tensor& w, const double* bias,
                             int sh, int sw, int ph, int pw, Tensor& out) {
  const int N = in.n(), B = in.c(), H = in.h(), W = in.w();
  const int A = w.n(), kh = w.h(), kw = w.w();
  const int OH = out.h(), OW = out.w();
  constexpr int kBlock = 8;
  std::vector<double> acc(static_cast<size_t>(kBlock) * OW);
  for (int n = 0; n < N; ++n) {
    for (int ab = 0; ab < A; ab += kBlock) {
      const int nb = std::min(kBlock, A - ab);
      for (int oy = 0; oy < OH; ++oy) {
        std::memset(acc.data(), 0, sizeof(double) * nb * OW);
        for (int b = 0; b < B; ++b) {
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * sh - ph + ky;
            if (iy < 0 || iy >= H) continue;
            const double* inrow = in.data() + in.row_offset(n, b, iy);
            for (int kx = 0; kx < kw; ++kx) {
              const int off = kx - pw;
              // valid ox range: 0 <= ox*sw + off < W
              int x0 = 0, x1 = OW;
              if (sw == 1) {
                x0 = std::max(0, -off);
                x1 = std::min(OW, W - off);
                if (x0 >= x1) continue;
                for (int a = 0; a < nb; ++a) {
                  const double wv = w.at(ab + a, b, ky, kx);
                  double* ar = acc.data() + static_cast<size_t>(a) * OW;
                  const double* ir = inrow + off;
                  for (int ox = x0; ox < x1; ++ox) ar[ox] += wv * ir[ox];
                }
              } else {
                x0 = off < 0 ? (-off + sw - 1) / sw : 0;
                x1 = std::min(OW, off < W ? (W - off + sw - 1) / sw : 0);
                if (x0 >= x1) continue;
                for (int a = 0; a < nb; ++a) {
                  const double wv = w.at(ab + a, b, ky, kx);
                  double* ar = acc.data() + static_cast<size_t>(a) * OW;
                  for (int ox = x0; ox < x1; ++ox) ar[ox] += wv * inrow[ox * sw + off];
                }
              }
            }
          }
        }
        for (int a = 0; a < nb; ++a) {
          double* orow = out.data() + out.row_offset(n, ab + a, oy);
          const double* ar = acc.data() + static_cast<size_t>(a) * OW;
          const double bv = bias ? bias[ab + a] : 0.0;
          for (int ox = 0; ox < OW; ++ox) orow[ox] += ar[ox] + bv;
        }
      }
    }
  }
}

// Shared scatter core: out[n,a,oy,ox] += sum over taps of w[b,a,ky,kx] * in[n,b,iy,ix]
// with oy = iy*sh - ph + ky. This is the adjoint of correlate_gather and doubles
// as the transposed-convolution forward and the convolution input gradient.
//
// Decomposed by output phase (oy mod sh, ox mod sw): the taps feeding one
// phase have fixed kernel residues, which turns every inner loop into a
// contiguous stride-1 accumulation into a phase buffer. The buffer is spilled
// to the strided output row once per row.
inline void correlate_scatter(const Tensor& in, const Tensor& w,
                              int sh, int sw, int ph, int pw, Tensor& out) {
  const int N = in.n(), B = in.c(), H = in.h(), W = in.w();
  const int A = w.c(), kh = w.h(), kw = w.w();
  const int OH = out.h(), OW = out.w();

  struct Tap {
    int k;  // kernel index
    int c;  // input offset: input_index = phase_index + c
  };
  std::vector<std::vector<Tap>> ytaps(static_cast<size_t>(sh)), xtaps(static_cast<size_t>(sw));
  for (int ky = 0; ky < kh; ++ky) {
    const int ry = ((ky - ph) % sh + sh) % sh;
    ytaps[static_cast<size_t>(ry)].push_back(Tap{ky, (ry + ph - ky) / sh});
  }
  for (int kx = 0; kx < kw; ++kx) {
    const int rx = ((kx - pw) % sw + sw) % sw;
    xtaps[static_cast<size_t>(rx)].push_back(Tap{kx, (rx + pw - kx) / sw});
  }

  constexpr int kBlock = 8;
  const int owp_max = (OW + sw - 1) / sw;
  std::vector<double> acc(static_cast<size_t>(kBlock) * owp_max);

  for (int n = 0; n < N; ++n) {
    for (int ab = 0; ab < A; ab += kBlock) {
      const int nb = std::min(kBlock, A - ab);
      for (int ry = 0; ry < sh; ++ry) {
        const auto& yt = ytaps[static_cast<size_t>(ry)];
        if (yt.empty()) continue;
        for (int oy = ry; oy < OH; oy += sh) {
          const int ty = (oy - ry) / sh;
          for (int rx = 0; rx < sw; ++rx) {
            const auto& xt = xtaps[static_cast<size_t>(rx)];
            if (xt.empty()) continue;
            const int owp = (OW - rx + sw - 1) / sw;
            if (owp <= 0) continue;
            std::memset(acc.data(), 0, sizeof(double) * nb * owp);
            for (int b = 0; b < B; ++b) {
              for (const Tap& tyap : yt) {
                const int iy = ty + tyap.c;
                if (iy < 0 || iy >= H) continue;
                const double* inrow = in.data() + in.row_offset(n, b, iy);
                for (const Tap& txap : xt) {
                  const int cx = txap.c;
                  const int t0 = std::max(0, -cx);
                  const int t1 = std::min(owp, W - cx);
                  if (t0 >= t1) continue;
                  const double* ir = inrow + cx;
                  for (int a = 0; a < nb; ++a) {
                    const double wv = w.at(b, ab + a, tyap.k, txap.k);
                    double* ar = acc.data() + static_cast<size_t>(a) * owp;
                    for (int tx = t0; tx < t1; ++tx) ar[tx] += wv * ir[tx];
                  }
                }
              }
            }
            for (int a = 0; a < nb; ++a) {
              double* orow = out.data() + out.row_offset(n, ab + a, oy);
              const double* ar = acc.data() + static_cast<size_t>(a) * owp;
              for (int tx = 0; tx < owp; ++tx) orow[rx + sw * tx] += ar[tx];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution. Weight layout [Cout, Cin, kh, kw]; bias carries Cout values.
// ---------------------------------------------------------------------------

inline void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& bias,
                            const ConvSpec& spec, bool transposed) {
  spec.validate();
  require(w.h() == spec.kh && w.w() == spec.kw,
          "conv2d: weight kernel dims (" + std::to_string(w.h()) + "x" + std::to_string(w.w()) +
              ") do not match spec (" + std::to_string(spec.kh) + "x" + std::to_string(spec.kw) + ")");
  const int expect_in = transposed ? w.n() : w.c();
  require(x.c() == expect_in,
          std::string(transposed ? "conv2d_transpose" : "conv2d") + ": input channels (" +
              std::to_string(x.c()) + ") do not match weight (" + std::to_string(expect_in) + ")");
  const int cout = transposed ? w.c() : w.n();
  require(bias.numel() == cout,
          "conv2d: bias size (" + std::to_string(bias.numel()) + ") does not match output channels (" +
              std::to_string(cout) + ")");
}

inline Tensor conv2d_fwd(const Tensor& x, const Tensor& w, const Tensor& bias,
                         const ConvSpec& spec) {
  check_conv_args(x, w, bias, spec, false);
  auto [ph, pw] = spec.padding();
  require(x.h() + 2 * ph >= spec.kh && x.w() + 2 * pw >= spec.kw,
          "conv2d: kernel " + std::to_string(spec.kh) + "x" + std::to_string(spec.kw) +
              " does not fit padded input " + std::to_string(x.h()) + "x" + std::to_string(x.w()));
  const int oh = conv_out_size(x.h(), spec.kh, spec.sh, ph);
  const int ow = conv_out_size(x.w(), spec.kw, spec.sw, pw);
  require(oh >= 1 && ow >= 1, "conv2d: empty output for input " + x.shape_str());
  Tensor out(x.n(), w.n(), oh, ow);
  detail::correlate_gather(x, w, bias.data(), spec.sh, spec.sw, ph, pw, out);
  return out;
}

inline void conv2d_bwd_input_acc(const Tensor& gout, const Tensor& w, const ConvSpec& spec,
                                 Tensor& gin) {
  auto [ph, pw] = spec.padding();
  detail::correlate_scatter(gout, w, spec.sh, spec.sw, ph, pw, gin);
}

// gw[a,b,ky,kx] += sum_{n,oy,ox} ref[n,b,oy*sh-ph+ky, ox*sw-pw+kx] * g[n,a,oy,ox]
inline void conv2d_bwd_weight_acc(const Tensor& gout, const Tensor& x, const ConvSpec& spec,
                                  Tensor& gw) {
  auto [ph, pw] = spec.padding();
  const int N = x.n(), H = x.h(), W = x.w();
  const int OH = gout.h(), OW = gout.w();
  const int sh = spec.sh, sw = spec.sw;
  for (int a = 0; a < gw.n(); ++a) {
    for (int b = 0; b < gw.c(); ++b) {
      for (int ky = 0; ky < gw.h(); ++ky) {
        for (int kx = 0; kx < gw.w(); ++kx) {
          double acc = 0.0;
          const int off = kx - pw;
          for (int n = 0; n < N; ++n) {
            for (int oy = 0; oy < OH; ++oy) {
              const int iy = oy * sh - ph + ky;
              if (iy < 0 || iy >= H) continue;
              const double* xrow = x.data() + x.row_offset(n, b, iy);
              const double* grow = gout.data() + gout.row_offset(n, a, oy);
              if (sw == 1) {
                const int x0 = std::max(0, -off);
                const int x1 = std::min(OW, W - off);
                const double* xr = xrow + off;
                for (int ox = x0; ox < x1; ++ox) acc += xr[ox] * grow[ox];
              } else {
                for (int ox = 0; ox < OW; ++ox) {
                  const int ix = ox * sw + off;
                  if (ix >= 0 && ix < W) acc += xrow[ix] * grow[ox];
                }
              }
            }
          }
          gw.at(a, b, ky, kx) += acc;
        }
      }
    }
  }
}

inline void reduce_bias_grad_acc(const Tensor& gout, Tensor& gb) {
  for (int n = 0; n < gout.n(); ++n)
    for (int c = 0; c < gout.c(); ++c) {
      double acc = 0.0;
      const double* p = gout.data() + gout.row_offset(n, c, 0);
      const int64_t plane = static_cast<int64_t>(gout.h()) * gout.w();
      for (int64_t i = 0; i < plane; ++i) acc += p[i];
      gb[c] += acc;
    }
}

// ---------------------------------------------------------------------------
// Transposed convolution. Weight layout [Cin, Cout, kh, kw]; exact adjoint of
// conv2d under the same spec and weight.
// ---------------------------------------------------------------------------

inline Tensor conv2d_transpose_fwd(const Tensor& x, const Tensor& w, const Tensor& bias,
                                   const ConvSpec& spec) {
  check_conv_args(x, w, bias, spec, true);
  auto [ph, pw] = spec.padding();
  const int oh = conv_transpose_out_size(x.h(), spec.kh, spec.sh, ph, spec.oph);
  const int ow = conv_transpose_out_size(x.w(), spec.kw, spec.sw, pw, spec.opw);
  require(oh >= 1 && ow >= 1,
          "conv2d_transpose: computed output size " + std::to_string(oh) + "x" + std::to_string(ow) +
              " is not positive for input " + x.shape_str());
  Tensor out(x.n(), w.c(), oh, ow);
  for (int n = 0; n < out.n(); ++n)
    for (int c = 0; c < out.c(); ++c) {
      double* p = out.data() + out.row_offset(n, c, 0);
      const int64_t plane = static_cast<int64_t>(oh) * ow;
      for (int64_t i = 0; i < plane; ++i) p[i] = bias[c];
    }
  detail::correlate_scatter(x, w, spec.sh, spec.sw, ph, pw, out);
  return out;
}

inline void conv2d_transpose_bwd_input_acc(const Tensor& gout, const Tensor& w,
                                           const ConvSpec& spec, Tensor& gin) {
  auto [ph, pw] = spec.padding();
  detail::correlate_gather(gout, w, nullptr, spec.sh, spec.sw, ph, pw, gin);
}

inline void conv2d_transpose_bwd_weight_acc(const Tensor& gout, const Tensor& x,
                                            const ConvSpec& spec, Tensor& gw) {
  // Same contraction as the convolution weight gradient with the roles of the
  // two activation tensors swapped: here gout plays the padded-image side.
  conv2d_bwd_weight_acc(x, gout, spec, gw);
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

inline Tensor max_pool2d_fwd(const Tensor& x) {
  require(x.h() % 2 == 0 && x.w() % 2 == 0,
          "max_pool2d: spatial size " + std::to_string(x.h()) + "x" + std::to_string(x.w()) +
              " is not divisible by 2");
  Tensor out(x.n(), x.c(), x.h() / 2, x.w() / 2);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < out.h(); ++oy)
        for (int ox = 0; ox < out.w(); ++ox) {
          const double a = x.at(n, c, 2 * oy, 2 * ox);
          const double b = x.at(n, c, 2 * oy, 2 * ox + 1);
          const double d = x.at(n, c, 2 * oy + 1, 2 * ox);
          const double e = x.at(n, c, 2 * oy + 1, 2 * ox + 1);
          out.at(n, c, oy, ox) = std::max(std::max(a, b), std::max(d, e));
        }
  return out;
}

/// Row-major index of the window maximum, first index winning ties.
inline int max_pool2d_argmax(const Tensor& x, int n, int c, int oy, int ox) {
  int best = 0;
  double bv = x.at(n, c, 2 * oy, 2 * ox);
  const double cand[4] = {bv, x.at(n, c, 2 * oy, 2 * ox + 1), x.at(n, c, 2 * oy + 1, 2 * ox),
                          x.at(n, c, 2 * oy + 1, 2 * ox + 1)};
  for (int i = 1; i < 4; ++i)
    if (cand[i] > bv) {
      bv = cand[i];
      best = i;
    }
  return best;
}

inline void max_pool2d_bwd_acc(const Tensor& gout, const Tensor& x, Tensor& gin) {
  for (int n = 0; n < gout.n(); ++n)
    for (int c = 0; c < gout.c(); ++c)
      for (int oy = 0; oy < gout.h(); ++oy)
        for (int ox = 0; ox < gout.w(); ++ox) {
          const int am = max_pool2d_argmax(x, n, c, oy, ox);
          gin.at(n, c, 2 * oy + am / 2, 2 * ox + am % 2) += gout.at(n, c, oy, ox);
        }
}

/// 3x3 mean with stride 1 and SAME extent; border cells divide by the number
/// of in-bounds taps. The mean is computed relative to the window center
/// (center + mean of differences), which makes constant inputs map to
/// themselves bit-exactly.
inline Tensor avg_pool2d_same_fwd(const Tensor& x) {
  Tensor out(x.n(), x.c(), x.h(), x.w());
  const int H = x.h(), W = x.w();
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < H; ++y) {
        const int y0 = std::max(0, y - 1), y1 = std::min(H - 1, y + 1);
        for (int xpos = 0; xpos < W; ++xpos) {
          const int x0 = std::max(0, xpos - 1), x1 = std::min(W - 1, xpos + 1);
          const double center = x.at(n, c, y, xpos);
          double acc = 0.0;
          for (int iy = y0; iy <= y1; ++iy)
            for (int ix = x0; ix <= x1; ++ix) acc += x.at(n, c, iy, ix) - center;
          out.at(n, c, y, xpos) = center + acc / ((y1 - y0 + 1) * (x1 - x0 + 1));
        }
      }
  return out;
}

inline void avg_pool2d_same_bwd_acc(const Tensor& gout, Tensor& gin) {
  const int H = gout.h(), W = gout.w();
  for (int n = 0; n < gout.n(); ++n)
    for (int c = 0; c < gout.c(); ++c)
      for (int y = 0; y < H; ++y) {
        const int y0 = std::max(0, y - 1), y1 = std::min(H - 1, y + 1);
        for (int xpos = 0; xpos < W; ++xpos) {
          const int x0 = std::max(0, xpos - 1), x1 = std::min(W - 1, xpos + 1);
          const double g = gout.at(n, c, y, xpos) / ((y1 - y0 + 1) * (x1 - x0 + 1));
          for (int iy = y0; iy <= y1; ++iy)
            for (int ix = x0; ix <= x1; ++ix) gin.at(n, c, iy, ix) += g;
        }
      }
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

namespace detail {
struct LerpTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

inline LerpTap lerp_tap(int o, int out_size, int in_size) {
  const double src = (o + 0.5) * static_cast<double>(in_size) / out_size - 0.5;
  double fl = std::floor(src);
  LerpTap t;
  t.w1 = src - fl;
  t.i0 = std::clamp(static_cast<int>(fl), 0, in_size - 1);
  t.i1 = std::clamp(static_cast<int>(fl) + 1, 0, in_size - 1);
  return t;
}
}  // namespace detail

/// Bilinear resize, half-pixel centers (align-corners false). Edge samples
/// clamp to the border. Interpolation uses the a + t*(b-a) form, which maps
/// constants to constants exactly and never leaves the input value range.
inline Tensor bilinear_resize_fwd(const Tensor& x, int oh, int ow) {
  require(oh >= 1 && ow >= 1, "bilinear_resize: output size must be positive");
  Tensor out(x.n(), x.c(), oh, ow);
  std::vector<detail::LerpTap> xt(ow);
  for (int ox = 0; ox < ow; ++ox) xt[ox] = detail::lerp_tap(ox, ow, x.w());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < oh; ++oy) {
        const auto yt = detail::lerp_tap(oy, oh, x.h());
        const double* r0 = x.data() + x.row_offset(n, c, yt.i0);
        const double* r1 = x.data() + x.row_offset(n, c, yt.i1);
        double* orow = out.data() + out.row_offset(n, c, oy);
        for (int ox = 0; ox < ow; ++ox) {
          const auto& t = xt[ox];
          const double top = r0[t.i0] + t.w1 * (r0[t.i1] - r0[t.i0]);
          const double bot = r1[t.i0] + t.w1 * (r1[t.i1] - r1[t.i0]);
          orow[ox] = top + yt.w1 * (bot - top);
        }
      }
  return out;
}

inline void bilinear_resize_bwd_acc(const Tensor& gout, Tensor& gin) {
  const int oh = gout.h(), ow = gout.w();
  std::vector<detail::LerpTap> xt(ow);
  for (int ox = 0; ox < ow; ++ox) xt[ox] = detail::lerp_tap(ox, ow, gin.w());
  for (int n = 0; n < gout.n(); ++n)
    for (int c = 0; c < gout.c(); ++c)
      for (int oy = 0; oy < oh; ++oy) {
        const auto yt = detail::lerp_tap(oy, oh, gin.h());
        double* r0 = gin.data() + gin.row_offset(n, c, yt.i0);
        double* r1 = gin.data() + gin.row_offset(n, c, yt.i1);
        const double* grow = gout.data() + gout.row_offset(n, c, oy);
        for (int ox = 0; ox < ow; ++ox) {
          const auto& t = xt[ox];
          const double g = grow[ox];
          r0[t.i0] += g * (1 - yt.w1) * (1 - t.w1);
          r0[t.i1] += g * (1 - yt.w1) * t.w1;
          r1[t.i0] += g * yt.w1 * (1 - t.w1);
          r1[t.i1] += g * yt.w1 * t.w1;
        }
      }
}

inline Tensor nearest_resize(const Tensor& x, int oh, int ow) {
  require(oh >= 1 && ow >= 1, "nearest_resize: output size must be positive");
  Tensor out(x.n(), x.c(), oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < oh; ++oy) {
        const int iy = std::clamp(static_cast<int>((oy + 0.5) * x.h() / oh), 0, x.h() - 1);
        for (int ox = 0; ox < ow; ++ox) {
          const int ix = std::clamp(static_cast<int>((ox + 0.5) * x.w() / ow), 0, x.w() - 1);
          out.at(n, c, oy, ox) = x.at(n, c, iy, ix);
        }
      }
  return out;
}

/// 2x2 block mean; spatial dims must be even.
inline Tensor area_downsample2(const Tensor& x) {
  require(x.h() % 2 == 0 && x.w() % 2 == 0,
          "area_downsample2: spatial size " + std::to_string(x.h()) + "x" +
              std::to_string(x.w()) + " is not divisible by 2");
  Tensor out(x.n(), x.c(), x.h() / 2, x.w() / 2);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < out.h(); ++oy)
        for (int ox = 0; ox < out.w(); ++ox)
          out.at(n, c, oy, ox) = 0.25 * (x.at(n, c, 2 * oy, 2 * ox) + x.at(n, c, 2 * oy, 2 * ox + 1) +
                                         x.at(n, c, 2 * oy + 1, 2 * ox) +
                                         x.at(n, c, 2 * oy + 1, 2 * ox + 1));
  return out;
}

inline Tensor hflip(const Tensor& x) {
  Tensor out(x.n(), x.c(), x.h(), x.w());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) out.at(n, c, y, xx) = x.at(n, c, y, x.w() - 1 - xx);
  return out;
}

// ---------------------------------------------------------------------------
// Channel concat / slice
// ---------------------------------------------------------------------------

inline Tensor concat_channels_fwd(const std::vector<const Tensor*>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Tensor& first = *parts[0];
  int ctotal = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    const Tensor& p = *parts[i];
    require(p.n() == first.n() && p.h() == first.h() && p.w() == first.w(),
            "concat_channels: part " + std::to_string(i) + " shape [" + p.shape_str() +
                "] does not match part 0 [" + first.shape_str() + "] in batch or spatial dims");
    ctotal += p.c();
  }
  Tensor out(first.n(), ctotal, first.h(), first.w());
  const int64_t plane = static_cast<int64_t>(first.h()) * first.w();
  for (int n = 0; n < first.n(); ++n) {
    int co = 0;
    for (const Tensor* p : parts) {
      for (int c = 0; c < p->c(); ++c, ++co)
        std::memcpy(out.data() + out.row_offset(n, co, 0), p->data() + p->row_offset(n, c, 0),
                    sizeof(double) * plane);
    }
  }
  return out;
}

inline Tensor slice_channels_fwd(const Tensor& x, int c0, int len) {
  require(c0 >= 0 && len >= 1 && c0 + len <= x.c(),
          "slice_channels: range [" + std::to_string(c0) + "," + std::to_string(c0 + len) +
              ") out of bounds for " + std::to_string(x.c()) + " channels");
  Tensor out(x.n(), len, x.h(), x.w());
  const int64_t plane = static_cast<int64_t>(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < len; ++c)
      std::memcpy(out.data() + out.row_offset(n, c, 0), x.data() + x.row_offset(n, c0 + c, 0),
                  sizeof(double) * plane);
  return out;
}

inline void slice_channels_bwd_acc(const Tensor& gout, int c0, Tensor& gin) {
  const int64_t plane = static_cast<int64_t>(gout.h()) * gout.w();
  for (int n = 0; n < gout.n(); ++n)
    for (int c = 0; c < gout.c(); ++c) {
      double* dst = gin.data() + gin.row_offset(n, c0 + c, 0);
      const double* src = gout.data() + gout.row_offset(n, c, 0);
      for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
}

// ---------------------------------------------------------------------------
// Pointwise
// ---------------------------------------------------------------------------

inline Tensor eltwise_mul_fwd(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "eltwise mul: shape [" + a.shape_str() + "] vs [" + b.shape_str() + "]");
  Tensor out(a.n(), a.c(), a.h(), a.w());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline Tensor axpby_fwd(const Tensor& a, const Tensor& b, double alpha, double beta) {
  require(a.same_shape(b), "eltwise add: shape [" + a.shape_str() + "] vs [" + b.shape_str() + "]");
  Tensor out(a.n(), a.c(), a.h(), a.w());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = alpha * a[i] + beta * b[i];
  return out;
}

inline Tensor relu_fwd(const Tensor& x) {
  Tensor out(x.n(), x.c(), x.h(), x.w());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

inline Tensor tanh_fwd(const Tensor& x) {
  Tensor out(x.n(), x.c(), x.h(), x.w());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::tanh(x[i]);
  return out;
}

/// Broadcast-add a [N,C,1,1] tensor over the spatial extent of a.
inline Tensor add_broadcast_hw_fwd(const Tensor& a, const Tensor& g) {
  require(g.h() == 1 && g.w() == 1,
          "add_broadcast_hw: broadcast operand must be 1x1 spatially, got [" + g.shape_str() + "]");
  require(a.n() == g.n() && a.c() == g.c(),
          "add_broadcast_hw: batch/channel mismatch [" + a.shape_str() + "] vs [" + g.shape_str() + "]");
  Tensor out(a.n(), a.c(), a.h(), a.w());
  const int64_t plane = static_cast<int64_t>(a.h()) * a.w();
  for (int n = 0; n < a.n(); ++n)
    for (int c = 0; c < a.c(); ++c) {
      const double gv = g.at(n, c, 0, 0);
      const double* src = a.data() + a.row_offset(n, c, 0);
      double* dst = out.data() + out.row_offset(n, c, 0);
      for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] + gv;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Per-pixel two-class softmax (max-subtracted for stability)
// ---------------------------------------------------------------------------

inline Tensor pixel_softmax2_fwd(const Tensor& z) {
  require(z.c() == 2, "pixel_softmax2: expected 2 channels, got " + std::to_string(z.c()));
  Tensor out(z.n(), 2, z.h(), z.w());
  const int64_t plane = static_cast<int64_t>(z.h()) * z.w();
  for (int n = 0; n < z.n(); ++n) {
    const double* z0 = z.data() + z.row_offset(n, 0, 0);
    const double* z1 = z.data() + z.row_offset(n, 1, 0);
    double* p0 = out.data() + out.row_offset(n, 0, 0);
    double* p1 = out.data() + out.row_offset(n, 1, 0);
    for (int64_t i = 0; i < plane; ++i) {
      const double m = std::max(z0[i], z1[i]);
      const double e0 = std::exp(z0[i] - m);
      const double e1 = std::exp(z1[i] - m);
      const double s = e0 + e1;
      p0[i] = e0 / s;
      p1[i] = e1 / s;
    }
  }
  return out;
}

inline void pixel_softmax2_bwd_acc(const Tensor& gout, const Tensor& probs, Tensor& gin) {
  const int64_t plane = static_cast<int64_t>(probs.h()) * probs.w();
  for (int n = 0; n < probs.n(); ++n) {
    const double* p0 = probs.data() + probs.row_offset(n, 0, 0);
    const double* p1 = probs.data() + probs.row_offset(n, 1, 0);
    const double* g0 = gout.data() + gout.row_offset(n, 0, 0);
    const double* g1 = gout.data() + gout.row_offset(n, 1, 0);
    double* o0 = gin.data() + gin.row_offset(n, 0, 0);
    double* o1 = gin.data() + gin.row_offset(n, 1, 0);
    for (int64_t i = 0; i < plane; ++i) {
      const double dot = g0[i] * p0[i] + g1[i] * p1[i];
      o0[i] += p0[i] * (g0[i] - dot);
      o1[i] += p1[i] * (g1[i] - dot);
    }
  }
}

// ---------------------------------------------------------------------------
// Sobel gradients (replicate border) and the smooth boundary response
// ---------------------------------------------------------------------------

namespace detail {
constexpr int kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr int kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

// Evaluated as (positive side) - (negative side) so the two sides are the
// same floating-point expression on constant inputs and cancel exactly;
// accumulating tap by tap leaves an ulp-sized residue that a later
// normalization would blow up to full scale.
inline void sobel_xy_at(const Tensor& x, int n, int c, int y, int xx, double& gx, double& gy) {
  const int ym = std::max(y - 1, 0), yp = std::min(y + 1, x.h() - 1);
  const int xm = std::max(xx - 1, 0), xp = std::min(xx + 1, x.w() - 1);
  const double tl = x.at(n, c, ym, xm), tc = x.at(n, c, ym, xx), tr = x.at(n, c, ym, xp);
  const double ml = x.at(n, c, y, xm), mr = x.at(n, c, y, xp);
  const double bl = x.at(n, c, yp, xm), bc = x.at(n, c, yp, xx), br = x.at(n, c, yp, xp);
  gx = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
  gy = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
}
}  // namespace detail

inline Tensor sobel_magnitude(const Tensor& x) {
  Tensor out(x.n(), x.c(), x.h(), x.w());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) {
          double gx, gy;
          detail::sobel_xy_at(x, n, c, y, xx, gx, gy);
          out.at(n, c, y, xx) = std::sqrt(gx * gx + gy * gy);
        }
  return out;
}

constexpr double kBoundarySmoothing = 1e-12;

/// tanh(sqrt(gx^2 + gy^2 + delta)) minus its value at zero gradient: a
/// differentiable gradient-magnitude response in [0, 1) that is exactly zero
/// on constant inputs. The baseline shift does not change the derivative.
inline Tensor boundary_response_fwd(const Tensor& x, double delta = kBoundarySmoothing) {
  require(x.c() == 1, "boundary_map: expected single channel, got " + std::to_string(x.c()));
  const double baseline = std::tanh(std::sqrt(delta));
  Tensor out(x.n(), 1, x.h(), x.w());
  for (int n = 0; n < x.n(); ++n)
    for (int y = 0; y < x.h(); ++y)
      for (int xx = 0; xx < x.w(); ++xx) {
        double gx, gy;
        detail::sobel_xy_at(x, n, 0, y, xx, gx, gy);
        out.at(n, 0, y, xx) = std::tanh(std::sqrt(gx * gx + gy * gy + delta)) - baseline;
      }
  return out;
}

inline void boundary_response_bwd_acc(const Tensor& gout, const Tensor& x, Tensor& gin,
                                      double delta = kBoundarySmoothing) {
  for (int n = 0; n < x.n(); ++n)
    for (int y = 0; y < x.h(); ++y)
      for (int xx = 0; xx < x.w(); ++xx) {
        double gx, gy;
        detail::sobel_xy_at(x, n, 0, y, xx, gx, gy);
        const double m = std::sqrt(gx * gx + gy * gy + delta);
        const double t = std::tanh(m);
        const double coef = gout.at(n, 0, y, xx) * (1.0 - t * t) / m;
        for (int dy = -1; dy <= 1; ++dy) {
          const int iy = std::clamp(y + dy, 0, x.h() - 1);
          for (int dx = -1; dx <= 1; ++dx) {
            const int ix = std::clamp(xx + dx, 0, x.w() - 1);
            gin.at(n, 0, iy, ix) += coef * (gx * detail::kSobelX[dy + 1][dx + 1] +
                                            gy * detail::kSobelY[dy + 1][dx + 1]);
          }
        }
      }
}

}  // namespace enfnet
