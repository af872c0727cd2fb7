#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "enfnet/kernels.hpp"
#include "enfnet/tensor.hpp"

namespace enfnet {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Value {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& val() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Append-only record of executed operations. Nodes are topologically ordered
/// by construction; reverse accumulation walks them back to front. A tape owns
/// every intermediate value, so backward closures read their inputs straight
/// from the tape instead of keeping private copies.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched by backward
    std::vector<int> inputs;
    BackwardFn backward;  // null for leaves
    const char* op = "leaf";
  };

  Value leaf(Tensor v) {
    nodes_.push_back(Node{std::move(v), Tensor(), {}, nullptr, "leaf"});
    return Value{this, static_cast<int>(nodes_.size()) - 1};
  }

  Value push(Tensor value, std::vector<int> inputs, BackwardFn bwd, const char* op) {
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(inputs), std::move(bwd), op});
    return Value{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  size_t size() const { return nodes_.size(); }

  /// Gradient of a node after backward(); empty tensor if the node was never
  /// reached by the reverse sweep.
  const Tensor& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
  const Tensor& grad(Value v) const { return grad(v.id); }

  Tensor& ensure_grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) {
      const auto& s = n.value.shape();
      n.grad = Tensor(s[0], s[1], s[2], s[3]);
    }
    return n.grad;
  }

  /// Reverse accumulation from a scalar terminal. Gradients of earlier
  /// backward() calls on the same tape are discarded first.
  void backward(Value terminal) {
    require(terminal.tape == this, "backward: terminal belongs to a different tape");
    require(terminal.id >= 0 && terminal.id < static_cast<int>(nodes_.size()),
            "backward: terminal out of range");
    const Tensor& tv = nodes_[static_cast<size_t>(terminal.id)].value;
    require(tv.is_scalar(), "backward: terminal must be scalar, got shape [" + tv.shape_str() + "]");
    for (Node& n : nodes_) n.grad = Tensor();
    ensure_grad(terminal.id)[0] = 1.0;
    for (int i = terminal.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.grad.empty() && n.backward) n.backward(*this, i);
    }
  }

  /// Order-sensitive digest of every branchy decision taken during forward
  /// evaluation (relu signs, pool argmaxes, loss clamps). Two forward passes
  /// with the same digest lie on the same smooth piece of the function, which
  /// is what central differences require.
  uint64_t switch_hash() const { return switch_hash_; }

  void hash_mix(uint64_t v) {
    switch_hash_ ^= v + 0x9e3779b97f4a7c15ULL + (switch_hash_ << 6) + (switch_hash_ >> 2);
  }

 private:
  std::vector<Node> nodes_;
  uint64_t switch_hash_ = 0;
};

inline const Tensor& Value::val() const { return tape->value(id); }

namespace detail {
inline Tape& same_tape(std::initializer_list<Value> vs) {
  Tape* t = nullptr;
  for (const Value& v : vs) {
    require(v.valid(), "op input is not bound to a tape");
    if (t == nullptr) t = v.tape;
    require(v.tape == t, "op inputs belong to different tapes");
  }
  return *t;
}

/// Packs a stream of small integers into 64-bit words and mixes them into the
/// tape hash; used to fingerprint nondifferentiable switching decisions.
class SwitchHasher {
 public:
  explicit SwitchHasher(Tape& t) : tape_(t) {}
  void feed(uint64_t bits, int width) {
    word_ = (word_ << width) | bits;
    fill_ += width;
    if (fill_ >= 58) flush();
  }
  ~SwitchHasher() {
    if (fill_ > 0) flush();
  }

 private:
  void flush() {
    tape_.hash_mix(word_ ^ (0x243f6a8885a308d3ULL + fill_));
    word_ = 0;
    fill_ = 0;
  }
  Tape& tape_;
  uint64_t word_ = 0;
  int fill_ = 0;
};
}  // namespace detail

// ---------------------------------------------------------------------------
// Op builders
// ---------------------------------------------------------------------------

inline Value conv2d(Value x, Value w, Value b, const ConvSpec& spec) {
  Tape& t = detail::same_tape({x, w, b});
  Tensor out = conv2d_fwd(x.val(), w.val(), b.val(), spec);
  const int xi = x.id, wi = w.id, bi = b.id;
  return t.push(std::move(out), {xi, wi, bi},
                [xi, wi, bi, spec](Tape& tp, int self) {
                  const Tensor& g = tp.grad(self);
                  conv2d_bwd_input_acc(g, tp.value(wi), spec, tp.ensure_grad(xi));
                  conv2d_bwd_weight_acc(g, tp.value(xi), spec, tp.ensure_grad(wi));
                  reduce_bias_grad_acc(g, tp.ensure_grad(bi));
                },
                "conv2d");
}

namespace detail {
/// Gradient of a relu applied on top of `out`: g masked by out > 0. For relu,
/// out > 0 exactly where the pre-activation was positive.
inline Tensor relu_masked_grad(const Tensor& g, const Tensor& out) {
  Tensor mg(g.n(), g.c(), g.h(), g.w());
  for (int64_t i = 0; i < g.numel(); ++i) mg[i] = out[i] > 0.0 ? g[i] : 0.0;
  return mg;
}

inline void hash_positive_mask(Tape& t, const Tensor& v) {
  SwitchHasher h(t);
  for (int64_t i = 0; i < v.numel(); ++i) h.feed(v[i] > 0.0 ? 1 : 0, 1);
}
}  // namespace detail

/// conv2d + relu as one node: the pre-activation tensor is never stored,
/// which matters because the tape retains every node value.
inline Value conv2d_relu(Value x, Value w, Value b, const ConvSpec& spec) {
  Tape& t = detail::same_tape({x, w, b});
  Tensor out = conv2d_fwd(x.val(), w.val(), b.val(), spec);
  for (int64_t i = 0; i < out.numel(); ++i)
    if (out[i] < 0.0) out[i] = 0.0;
  detail::hash_positive_mask(t, out);
  const int xi = x.id, wi = w.id, bi = b.id;
  return t.push(std::move(out), {xi, wi, bi},
                [xi, wi, bi, spec](Tape& tp, int self) {
                  Tensor g = detail::relu_masked_grad(tp.grad(self), tp.value(self));
                  conv2d_bwd_input_acc(g, tp.value(wi), spec, tp.ensure_grad(xi));
                  conv2d_bwd_weight_acc(g, tp.value(xi), spec, tp.ensure_grad(wi));
                  reduce_bias_grad_acc(g, tp.ensure_grad(bi));
                },
                "conv2d_relu");
}

inline Value conv2d_transpose(Value x, Value w, Value b, const ConvSpec& spec) {
  Tape& t = detail::same_tape({x, w, b});
  Tensor out = conv2d_transpose_fwd(x.val(), w.val(), b.val(), spec);
  const int xi = x.id, wi = w.id, bi = b.id;
  return t.push(std::move(out), {xi, wi, bi},
                [xi, wi, bi, spec](Tape& tp, int self) {
                  const Tensor& g = tp.grad(self);
                  conv2d_transpose_bwd_input_acc(g, tp.value(wi), spec, tp.ensure_grad(xi));
                  conv2d_transpose_bwd_weight_acc(g, tp.value(xi), spec, tp.ensure_grad(wi));
                  reduce_bias_grad_acc(g, tp.ensure_grad(bi));
                },
                "conv2d_transpose");
}

inline Value conv2d_transpose_relu(Value x, Value w, Value b, const ConvSpec& spec) {
  Tape& t = detail::same_tape({x, w, b});
  Tensor out = conv2d_transpose_fwd(x.val(), w.val(), b.val(), spec);
  for (int64_t i = 0; i < out.numel(); ++i)
    if (out[i] < 0.0) out[i] = 0.0;
  detail::hash_positive_mask(t, out);
  const int xi = x.id, wi = w.id, bi = b.id;
  return t.push(std::move(out), {xi, wi, bi},
                [xi, wi, bi, spec](Tape& tp, int self) {
                  Tensor g = detail::relu_masked_grad(tp.grad(self), tp.value(self));
                  conv2d_transpose_bwd_input_acc(g, tp.value(wi), spec, tp.ensure_grad(xi));
                  conv2d_transpose_bwd_weight_acc(g, tp.value(xi), spec, tp.ensure_grad(wi));
                  reduce_bias_grad_acc(g, tp.ensure_grad(bi));
                },
                "conv2d_transpose_relu");
}

inline Value max_pool2d(Value x) {
  Tape& t = *x.tape;
  Tensor out = max_pool2d_fwd(x.val());
  {
    detail::SwitchHasher h(t);
    const Tensor& xv = x.val();
    for (int n = 0; n < out.n(); ++n)
      for (int c = 0; c < out.c(); ++c)
        for (int oy = 0; oy < out.h(); ++oy)
          for (int ox = 0; ox < out.w(); ++ox)
            h.feed(static_cast<uint64_t>(max_pool2d_argmax(xv, n, c, oy, ox)), 2);
  }
  const int xi = x.id;
  return t.push(std::move(out), {xi},
                [xi](Tape& tp, int self) {
                  max_pool2d_bwd_acc(tp.grad(self), tp.value(xi), tp.ensure_grad(xi));
                },
                "max_pool2d");
}

inline Value avg_pool2d_same(Value x) {
  Tape& t = *x.tape;
  const int xi = x.id;
  return t.push(avg_pool2d_same_fwd(x.val()), {xi},
                [xi](Tape& tp, int self) { avg_pool2d_same_bwd_acc(tp.grad(self), tp.ensure_grad(xi)); },
                "avg_pool2d_same");
}

inline Value bilinear_upsample(Value x, int factor) {
  require(factor >= 1, "bilinear_upsample: factor must be >= 1");
  Tape& t = *x.tape;
  const int xi = x.id;
  Tensor out = bilinear_resize_fwd(x.val(), x.val().h() * factor, x.val().w() * factor);
  return t.push(std::move(out), {xi},
                [xi](Tape& tp, int self) { bilinear_resize_bwd_acc(tp.grad(self), tp.ensure_grad(xi)); },
                "bilinear_upsample");
}

inline Value concat_channels(const std::vector<Value>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  Tape& t = *parts[0].tape;
  std::vector<const Tensor*> ptrs;
  std::vector<int> ids;
  for (const Value& p : parts) {
    require(p.tape == &t, "concat_channels: inputs belong to different tapes");
    ptrs.push_back(&p.val());
    ids.push_back(p.id);
  }
  Tensor out = concat_channels_fwd(ptrs);
  return t.push(std::move(out), ids,
                [ids](Tape& tp, int self) {
                  const Tensor& g = tp.grad(self);
                  int c0 = 0;
                  for (int id : ids) {
                    const int len = tp.value(id).c();
                    Tensor part = slice_channels_fwd(g, c0, len);
                    Tensor& gi = tp.ensure_grad(id);
                    for (int64_t i = 0; i < part.numel(); ++i) gi[i] += part[i];
                    c0 += len;
                  }
                },
                "concat_channels");
}

inline Value slice_channels(Value x, int c0, int len) {
  Tape& t = *x.tape;
  const int xi = x.id;
  return t.push(slice_channels_fwd(x.val(), c0, len), {xi},
                [xi, c0](Tape& tp, int self) {
                  slice_channels_bwd_acc(tp.grad(self), c0, tp.ensure_grad(xi));
                },
                "slice_channels");
}

inline Value eltwise_mul(Value a, Value b) {
  Tape& t = detail::same_tape({a, b});
  const int ai = a.id, bi = b.id;
  return t.push(eltwise_mul_fwd(a.val(), b.val()), {ai, bi},
                [ai, bi](Tape& tp, int self) {
                  const Tensor& g = tp.grad(self);
                  const Tensor& av = tp.value(ai);
                  const Tensor& bv = tp.value(bi);
                  Tensor& ga = tp.ensure_grad(ai);
                  Tensor& gb = tp.ensure_grad(bi);
                  for (int64_t i = 0; i < g.numel(); ++i) {
                    ga[i] += g[i] * bv[i];
                    gb[i] += g[i] * av[i];
                  }
                },
                "eltwise_mul");
}

inline Value axpby(Value a, Value b, double alpha, double beta) {
  Tape& t = detail::same_tape({a, b});
  const int ai = a.id, bi = b.id;
  return t.push(axpby_fwd(a.val(), b.val(), alpha, beta), {ai, bi},
                [ai, bi, alpha, beta](Tape& tp, int self) {
                  const Tensor& g = tp.grad(self);
                  Tensor& ga = tp.ensure_grad(ai);
                  Tensor& gb = tp.ensure_grad(bi);
                  for (int64_t i = 0; i < g.numel(); ++i) {
                    ga[i] += alpha * g[i];
                    gb[i] += beta * g[i];
                  }
                },
                "eltwise_add");
}

inline Value eltwise_add(Value a, Value b) { return axpby(a, b, 1.0, 1.0); }

inline Value add_broadcast_hw(Value a, Value g) {
  Tape& t = detail::same_tape({a, g});
  const int ai = a.id, gi = g.id;
  return t.push(add_broadcast_hw_fwd(a.val(), g.val()), {ai, gi},
                [ai, gi](Tape& tp, int self) {
                  const Tensor& go = tp.grad(self);
                  Tensor& ga = tp.ensure_grad(ai);
                  for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
                  reduce_bias_grad_acc(go, tp.ensure_grad(gi));
                },
                "add_broadcast_hw");
}

inline Value relu(Value x) {
  Tape& t = *x.tape;
  Tensor out = relu_fwd(x.val());
  {
    detail::SwitchHasher h(t);
    const Tensor& xv = x.val();
    for (int64_t i = 0; i < xv.numel(); ++i) h.feed(xv[i] > 0.0 ? 1 : 0, 1);
  }
  const int xi = x.id;
  return t.push(std::move(out), {xi},
                [xi](Tape& tp, int self) {
                  const Tensor& g = tp.grad(self);
                  const Tensor& xv = tp.value(xi);
                  Tensor& gi = tp.ensure_grad(xi);
                  for (int64_t i = 0; i < g.numel(); ++i)
                    if (xv[i] > 0.0) gi[i] += g[i];
                },
                "relu");
}

inline Value tanh_act(Value x) {
  Tape& t = *x.tape;
  const int xi = x.id;
  return t.push(tanh_fwd(x.val()), {xi},
                [xi](Tape& tp, int self) {
                  const Tensor& g = tp.grad(self);
                  const Tensor& y = tp.value(self);
                  Tensor& gi = tp.ensure_grad(xi);
                  for (int64_t i = 0; i < g.numel(); ++i) gi[i] += g[i] * (1.0 - y[i] * y[i]);
                },
                "tanh_act");
}

inline Value pixel_softmax2(Value z) {
  Tape& t = *z.tape;
  const int zi = z.id;
  return t.push(pixel_softmax2_fwd(z.val()), {zi},
                [zi](Tape& tp, int self) {
                  pixel_softmax2_bwd_acc(tp.grad(self), tp.value(self), tp.ensure_grad(zi));
                },
                "pixel_softmax2");
}

inline Value boundary_map(Value x) {
  Tape& t = *x.tape;
  const int xi = x.id;
  return t.push(boundary_response_fwd(x.val()), {xi},
                [xi](Tape& tp, int self) {
                  boundary_response_bwd_acc(tp.grad(self), tp.value(xi), tp.ensure_grad(xi));
                },
                "boundary_map");
}

inline Value sum_all(Value x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.val();
  double acc = 0.0;
  for (int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
  const int xi = x.id;
  return t.push(Tensor::scalar(acc), {xi},
                [xi](Tape& tp, int self) {
                  const double g = tp.grad(self)[0];
                  Tensor& gi = tp.ensure_grad(xi);
                  for (int64_t i = 0; i < gi.numel(); ++i) gi[i] += g;
                },
                "sum_all");
}

/// Mean two-class cross entropy against a binary mask, with probabilities
/// clamped to [eps, 1-eps] before the log. Gradient flows into pred only;
/// the mask is treated as data.
inline Value cross_entropy_loss(Value pred, Value gt, double eps) {
  Tape& t = detail::same_tape({pred, gt});
  const Tensor& p = pred.val();
  const Tensor& y = gt.val();
  require(p.same_shape(y),
          "cross_entropy_loss: shape [" + p.shape_str() + "] vs [" + y.shape_str() + "]");
  require(eps > 0.0 && eps < 0.5, "cross_entropy_loss: eps must lie in (0, 0.5)");
  for (int64_t i = 0; i < y.numel(); ++i)
    require(y[i] == 0.0 || y[i] == 1.0, "cross_entropy_loss: ground truth must be binary");
  const double n = static_cast<double>(p.numel());
  double acc = 0.0;
  {
    detail::SwitchHasher h(t);
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double pf = std::clamp(p[i], eps, 1.0 - eps);
      const double pb = std::clamp(1.0 - p[i], eps, 1.0 - eps);
      acc -= y[i] * std::log(pf) + (1.0 - y[i]) * std::log(pb);
      const uint64_t state = (p[i] <= eps ? 1 : (p[i] >= 1.0 - eps ? 2 : 0));
      h.feed(state, 2);
    }
  }
  const int pi = pred.id, yi = gt.id;
  return t.push(Tensor::scalar(acc / n), {pi, yi},
                [pi, yi, eps, n](Tape& tp, int self) {
                  const double g = tp.grad(self)[0] / n;
                  const Tensor& p = tp.value(pi);
                  const Tensor& y = tp.value(yi);
                  Tensor& gp = tp.ensure_grad(pi);
                  for (int64_t i = 0; i < p.numel(); ++i) {
                    double d = 0.0;
                    if (p[i] > eps && p[i] < 1.0 - eps) d -= y[i] / p[i];
                    const double pb = 1.0 - p[i];
                    if (pb > eps && pb < 1.0 - eps) d += (1.0 - y[i]) / pb;
                    gp[i] += g * d;
                  }
                },
                "cross_entropy_loss");
}

constexpr double kDiceDenomGuard = 1e-8;

/// Soft boundary-overlap loss 1 - 2|A.B| / (|A| + |B| + delta) on real-valued
/// maps; symmetric in its arguments, value in [0, 1].
inline Value iou_boundary_loss(Value a, Value b) {
  Tape& t = detail::same_tape({a, b});
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  require(av.same_shape(bv),
          "iou_boundary_loss: shape [" + av.shape_str() + "] vs [" + bv.shape_str() + "]");
  double si = 0.0, sa = 0.0, sb = 0.0;
  for (int64_t i = 0; i < av.numel(); ++i) {
    si += av[i] * bv[i];
    sa += av[i];
    sb += bv[i];
  }
  const double denom = sa + sb + kDiceDenomGuard;
  const double loss = 1.0 - 2.0 * si / denom;
  const int ai = a.id, bi = b.id;
  return t.push(Tensor::scalar(loss), {ai, bi},
                [ai, bi, si, denom](Tape& tp, int self) {
                  const double g = tp.grad(self)[0];
                  const Tensor& av = tp.value(ai);
                  const Tensor& bv = tp.value(bi);
                  Tensor& ga = tp.ensure_grad(ai);
                  Tensor& gb = tp.ensure_grad(bi);
                  const double d2 = denom * denom;
                  for (int64_t i = 0; i < av.numel(); ++i) {
                    ga[i] += g * (-2.0 * (bv[i] * denom - si) / d2);
                    gb[i] += g * (-2.0 * (av[i] * denom - si) / d2);
                  }
                },
                "iou_boundary_loss");
}

}  // namespace enfnet
