#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "enfnet/model.hpp"
#include "enfnet/tape.hpp"

namespace enfnet {

constexpr double kGradCheckEps = 1e-5;

struct GradCheckReport {
  std::string op;
  double max_rel_err = 0.0;
  int checked = 0;
  int skipped = 0;  // coordinates whose perturbation crossed a switching boundary
};

namespace gradcheck_detail {

// Central differences carry ~1e-15/(2 eps) of cancellation noise, so
// agreement below this magnitude carries no information either way.
constexpr double kNoiseFloor = 1e-6;

struct FdAccumulator {
  GradCheckReport rep;

  void add(double analytic, double fd) {
    rep.checked++;
    if (std::max(std::abs(analytic), std::abs(fd)) < kNoiseFloor) return;
    const double rel =
        std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-8});
    rep.max_rel_err = std::max(rep.max_rel_err, rel);
  }
};

inline std::vector<int64_t> sample_coords(int64_t numel, int want, std::mt19937_64& rng) {
  std::vector<int64_t> coords;
  if (numel <= want) {
    for (int64_t i = 0; i < numel; ++i) coords.push_back(i);
    return coords;
  }
  std::uniform_int_distribution<int64_t> dist(0, numel - 1);
  while (static_cast<int>(coords.size()) < want) {
    int64_t c = dist(rng);
    if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
  }
  return coords;
}

}  // namespace gradcheck_detail

/// Checks the tape gradient of a scalar-valued builder against central
/// differences over sampled input coordinates. A coordinate whose +/- eps
/// evaluations land on different smooth pieces (detected via the tape's
/// switch hash) is skipped: finite differences are meaningless across a relu
/// kink or an argmax flip.
inline GradCheckReport finite_diff_check(
    const std::string& name,
    const std::function<Value(Tape&, const std::vector<Value>&)>& builder,
    std::vector<Tensor> inputs, const std::vector<int>& check_inputs, double eps,
    int coords_per_input, std::mt19937_64& rng) {
  auto run = [&](uint64_t* hash_out) {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
    Value terminal = builder(tape, leaves);
    require(terminal.val().is_scalar(), "finite_diff_check: builder must produce a scalar");
    if (hash_out) *hash_out = tape.switch_hash();
    return std::pair<double, Tape>(terminal.val()[0], std::move(tape));
  };

  // Analytic pass.
  Tape tape;
  std::vector<Value> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  Value terminal = builder(tape, leaves);
  require(terminal.val().is_scalar(), "finite_diff_check: builder must produce a scalar");
  const uint64_t base_hash = tape.switch_hash();
  tape.backward(terminal);
  std::vector<Tensor> analytic;
  for (const Value& v : leaves) {
    Tensor g = tape.grad(v);
    if (g.empty()) {
      const auto& s = v.val().shape();
      g = Tensor(s[0], s[1], s[2], s[3]);
    }
    analytic.push_back(std::move(g));
  }

  gradcheck_detail::FdAccumulator acc;
  acc.rep.op = name;
  for (int idx : check_inputs) {
    Tensor& x = inputs[static_cast<size_t>(idx)];
    for (int64_t c : gradcheck_detail::sample_coords(x.numel(), coords_per_input, rng)) {
      const double saved = x[c];
      uint64_t hp = 0, hm = 0;
      x[c] = saved + eps;
      const double fp = run(&hp).first;
      x[c] = saved - eps;
      const double fm = run(&hm).first;
      x[c] = saved;
      if (hp != base_hash || hm != base_hash) {
        acc.rep.skipped++;
        continue;
      }
      acc.add(analytic[static_cast<size_t>(idx)][c], (fp - fm) / (2.0 * eps));
    }
  }
  return acc.rep;
}

/// Finite-difference check of the end-to-end loss against every model
/// parameter (sampled coordinates) and the input image. Uses fan-in scaled
/// init: at the 0.01 constant init the deep-layer gradients sit below
/// double-precision FD resolution, which would make the comparison vacuous.
inline GradCheckReport finite_diff_check_model(double eps, int coords_per_param, uint64_t seed) {
  NetworkConfig cfg;
  cfg.input_size = 32;
  cfg.block_channels = {4, 6, 6, 8, 8};
  cfg.side_channels = 4;
  cfg.fuse_channels = 4;
  cfg.global_kernels = {1, 1, 1};
  cfg.egb_count = 5;
  cfg.validate();
  LossWeights weights;

  ParamStore store;
  build_model_params(store, cfg, seed, InitMode::ScaledGaussian);

  std::mt19937_64 rng(seed ^ 0x5eedULL);
  Tensor image(1, 3, cfg.input_size, cfg.input_size);
  fill_uniform(image, rng, 0.0, 1.0);
  Tensor gt(1, 1, cfg.input_size / 2, cfg.input_size / 2);
  for (int y = 5; y < 12; ++y)
    for (int x = 4; x < 11; ++x) gt.at(0, 0, y, x) = 1.0;
  // Edge extraction is data preparation, not part of the differentiated
  // graph, so it stays fixed while image coordinates are perturbed.
  const Tensor edge_map = extract_edge_map(image);

  auto run = [&](uint64_t* hash_out, std::vector<Tensor>* grads) {
    Tape tape;
    ParamBinder bind(tape, store);
    Value img = tape.leaf(image);
    Value edge = tape.leaf(edge_map);
    ModelOutputs out = model_forward(bind, img, edge, cfg);
    LossTerms loss = model_loss(tape, out, gt, cfg, weights);
    if (hash_out) *hash_out = tape.switch_hash();
    const double v = loss.total.val()[0];
    if (grads) {
      tape.backward(loss.total);
      bind.export_grads();
      grads->clear();
      for (const Param& p : store.items()) grads->push_back(p.grad);
      const Tensor& gi = tape.grad(img);
      grads->push_back(gi.empty() ? Tensor(1, 3, cfg.input_size, cfg.input_size) : gi);
    }
    return v;
  };

  uint64_t base_hash = 0;
  std::vector<Tensor> analytic;
  run(&base_hash, &analytic);

  gradcheck_detail::FdAccumulator acc;
  acc.rep.op = "model_total_loss";
  auto check_coord = [&](Tensor& x, int64_t c, const Tensor& grad) {
    const double saved = x[c];
    uint64_t hp = 0, hm = 0;
    x[c] = saved + eps;
    const double fp = run(&hp, nullptr);
    x[c] = saved - eps;
    const double fm = run(&hm, nullptr);
    x[c] = saved;
    if (hp != base_hash || hm != base_hash) {
      acc.rep.skipped++;
      return;
    }
    acc.add(grad[c], (fp - fm) / (2.0 * eps));
  };

  size_t pi = 0;
  for (Param& p : store.items()) {
    for (int64_t c : gradcheck_detail::sample_coords(p.value.numel(), coords_per_param, rng))
      check_coord(p.value, c, analytic[pi]);
    ++pi;
  }
  for (int64_t c : gradcheck_detail::sample_coords(image.numel(), coords_per_param, rng))
    check_coord(image, c, analytic[pi]);
  return acc.rep;
}

// ---------------------------------------------------------------------------
// Named per-op check suite (shared by the CLI and the tests)
// ---------------------------------------------------------------------------

struct NamedCheck {
  std::string name;
  std::function<GradCheckReport(double eps)> fn;
};

namespace gradcheck_detail {

inline Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(n, c, h, w);
  fill_uniform(t, rng, lo, hi);
  return t;
}

/// Scalarizes a tensor-valued op as sum(out * projection) so every output
/// element participates with a distinct weight.
inline Value project_to_scalar(Tape& tape, Value out, std::mt19937_64& rng) {
  const auto& s = out.val().shape();
  Tensor proj(s[0], s[1], s[2], s[3]);
  fill_uniform(proj, rng, -1.0, 1.0);
  return sum_all(eltwise_mul(out, tape.leaf(std::move(proj))));
}

inline GradCheckReport merge(GradCheckReport into, const GradCheckReport& other) {
  into.max_rel_err = std::max(into.max_rel_err, other.max_rel_err);
  into.checked += other.checked;
  into.skipped += other.skipped;
  return into;
}

}  // namespace gradcheck_detail

/// All operation-level checks plus the end-to-end loss, each running several
/// random instances. Deterministic under the seed.
inline std::vector<NamedCheck> gradcheck_suite(uint64_t seed = 20240901, int instances = 10) {
  using gradcheck_detail::merge;
  using gradcheck_detail::project_to_scalar;
  using gradcheck_detail::random_tensor;
  std::vector<NamedCheck> suite;

  auto repeat = [seed, instances](const std::string& name,
                                  std::function<GradCheckReport(std::mt19937_64&, double)> one) {
    return NamedCheck{name, [name, one, seed, instances](double eps) {
                        GradCheckReport rep;
                        rep.op = name;
                        std::mt19937_64 rng(seed);
                        for (int i = 0; i < instances; ++i) rep = merge(rep, one(rng, eps));
                        return rep;
                      }};
  };

  suite.push_back(repeat("conv2d", [](std::mt19937_64& rng, double eps) {
    std::uniform_int_distribution<int> sd(1, 2);
    const int stride = sd(rng);
    Tensor x = random_tensor(1, 3, 6, 6, rng);
    Tensor w = random_tensor(4, 3, 3, 3, rng);
    Tensor b = random_tensor(1, 4, 1, 1, rng);
    return finite_diff_check(
        "conv2d",
        [stride](Tape& t, const std::vector<Value>& in) {
          std::mt19937_64 prng(7);
          return project_to_scalar(t, conv2d(in[0], in[1], in[2], ConvSpec::same(3, stride)), prng);
        },
        {x, w, b}, {0, 1, 2}, eps, 6, rng);
  }));

  suite.push_back(repeat("conv2d_transpose", [](std::mt19937_64& rng, double eps) {
    Tensor x = random_tensor(1, 3, 5, 5, rng);
    Tensor w = random_tensor(3, 2, 5, 5, rng);
    Tensor b = random_tensor(1, 2, 1, 1, rng);
    return finite_diff_check(
        "conv2d_transpose",
        [](Tape& t, const std::vector<Value>& in) {
          std::mt19937_64 prng(11);
          return project_to_scalar(
              t, conv2d_transpose(in[0], in[1], in[2], ConvSpec::explicit_pad(5, 2, 2, 1)), prng);
        },
        {x, w, b}, {0, 1, 2}, eps, 6, rng);
  }));

  suite.push_back(repeat("max_pool2d", [](std::mt19937_64& rng, double eps) {
    Tensor x = random_tensor(1, 2, 6, 6, rng, 0.0, 10.0);
    return finite_diff_check(
        "max_pool2d",
        [](Tape& t, const std::vector<Value>& in) {
          std::mt19937_64 prng(13);
          return project_to_scalar(t, max_pool2d(in[0]), prng);
        },
        {x}, {0}, eps, 8, rng);
  }));

  suite.push_back(repeat("avg_pool2d_same", [](std::mt19937_64& rng, double eps) {
    Tensor x = random_tensor(1, 2, 5, 5, rng);
    return finite_diff_check(
        "avg_pool2d_same",
        [](Tape& t, const std::vector<Value>& in) {
          std::mt19937_64 prng(17);
          return project_to_scalar(t, avg_pool2d_same(in[0]), prng);
        },
        {x}, {0}, eps, 8, rng);
  }));

  suite.push_back(repeat("bilinear_upsample", [](std::mt19937_64& rng, double eps) {
    Tensor x = random_tensor(1, 2, 4, 4, rng);
    return finite_diff_check(
        "bilinear_upsample",
        [](Tape& t, const std::vector<Value>& in) {
          std::mt19937_64 prng(19);
          return project_to_scalar(t, bilinear_upsample(in[0], 2), prng);
        },
        {x}, {0}, eps, 8, rng);
  }));

  suite.push_back(repeat("concat_channels", [](std::mt19937_64& rng, double eps) {
    Tensor a = random_tensor(1, 2, 4, 4, rng);
    Tensor b = random_tensor(1, 3, 4, 4, rng);
    return finite_diff_check(
        "concat_channels",
        [](Tape& t, const std::vector<Value>& in) {
          std::mt19937_64 prng(23);
          return project_to_scalar(t, concat_channels({in[0], in[1]}), prng);
        },
        {a, b}, {0, 1}, eps, 6, rng);
  }));

  suite.push_back(repeat("eltwise_mul", [](std::mt19937_64& rng, double eps) {
    Tensor a = random_tensor(1, 2, 3, 3, rng);
    Tensor b = random_tensor(1, 2, 3, 3, rng);
    return finite_diff_check(
        "eltwise_mul",
        [](Tape& t, const std::vector<Value>& in) {
          std::mt19937_64 prng(29);
          return project_to_scalar(t, eltwise_mul(in[0], in[1]), prng);
        },
        {a, b}, {0, 1}, eps, 6, rng);
  }));

  suite.push_back(repeat("eltwise_add", [](std::mt19937_64& rng, double eps) {
    Tensor a = random_tensor(1, 2, 3, 3, rng);
    Tensor b = random_tensor(1, 2, 3, 3, rng);
    return finite_diff_check(
        "eltwise_add",
        [](Tape& t, const std::vector<Value>& in) {
          std::mt19937_64 prng(31);
          return project_to_scalar(t, axpby(in[0], in[1], 0.7, -1.3), prng);
        },
        {a, b}, {0, 1}, eps, 6, rng);
  }));

  suite.push_back(repeat("relu", [](std::mt19937_64& rng, double eps) {
    Tensor x = random_tensor(1, 2, 4, 4, rng);
    // keep sampled points away from the kink
    for (int64_t i = 0; i < x.numel(); ++i)
      if (std::abs(x[i]) < 1e-2) x[i] = x[i] < 0 ? -0.05 : 0.05;
    return finite_diff_check(
        "relu",
        [](Tape& t, const std::vector<Value>& in) {
          std::mt19937_64 prng(37);
          return project_to_scalar(t, relu(in[0]), prng);
        },
        {x}, {0}, eps, 8, rng);
  }));

  suite.push_back(repeat("tanh_act", [](std::mt19937_64& rng, double eps) {
    Tensor x = random_tensor(1, 2, 4, 4, rng);
    return finite_diff_check(
        "tanh_act",
        [](Tape& t, const std::vector<Value>& in) {
          std::mt19937_64 prng(41);
          return project_to_scalar(t, tanh_act(in[0]), prng);
        },
        {x}, {0}, eps, 8, rng);
  }));

  suite.push_back(repeat("pixel_softmax2", [](std::mt19937_64& rng, double eps) {
    Tensor z = random_tensor(1, 2, 4, 4, rng, -2.0, 2.0);
    return finite_diff_check(
        "pixel_softmax2",
        [](Tape& t, const std::vector<Value>& in) {
          std::mt19937_64 prng(43);
          return project_to_scalar(t, pixel_softmax2(in[0]), prng);
        },
        {z}, {0}, eps, 8, rng);
  }));

  suite.push_back(repeat("boundary_map", [](std::mt19937_64& rng, double eps) {
    // Gentle ramp plus noise keeps the gradient magnitude in tanh's sensitive
    // band: neither near zero (curvature blows up) nor saturated (gradients
    // vanish below the FD noise floor).
    Tensor x(1, 1, 6, 6);
    std::uniform_real_distribution<double> noise(-0.03, 0.03);
    for (int y = 0; y < 6; ++y)
      for (int xx = 0; xx < 6; ++xx) x.at(0, 0, y, xx) = 0.08 * xx + 0.05 * y + noise(rng);
    return finite_diff_check(
        "boundary_map",
        [](Tape& t, const std::vector<Value>& in) {
          std::mt19937_64 prng(47);
          return project_to_scalar(t, boundary_map(in[0]), prng);
        },
        {x}, {0}, eps, 10, rng);
  }));

  suite.push_back(repeat("cross_entropy_loss", [](std::mt19937_64& rng, double eps) {
    Tensor pred = random_tensor(1, 1, 4, 4, rng, 0.05, 0.95);
    Tensor gt(1, 1, 4, 4);
    std::bernoulli_distribution coin(0.5);
    for (int64_t i = 0; i < gt.numel(); ++i) gt[i] = coin(rng) ? 1.0 : 0.0;
    return finite_diff_check(
        "cross_entropy_loss",
        [](Tape& t, const std::vector<Value>& in) {
          return cross_entropy_loss(in[0], in[1], 1e-7);
        },
        {pred, gt}, {0}, eps, 10, rng);
  }));

  suite.push_back(repeat("iou_boundary_loss", [](std::mt19937_64& rng, double eps) {
    Tensor a = random_tensor(1, 1, 4, 4, rng, 0.0, 1.0);
    Tensor b = random_tensor(1, 1, 4, 4, rng, 0.0, 1.0);
    return finite_diff_check(
        "iou_boundary_loss",
        [](Tape& t, const std::vector<Value>& in) { return iou_boundary_loss(in[0], in[1]); },
        {a, b}, {0, 1}, eps, 8, rng);
  }));

  suite.push_back(repeat("total_loss", [](std::mt19937_64& rng, double eps) {
    Tensor pred = random_tensor(1, 1, 6, 6, rng, 0.1, 0.9);
    Tensor gt(1, 1, 6, 6);
    for (int y = 2; y < 5; ++y)
      for (int x = 1; x < 4; ++x) gt.at(0, 0, y, x) = 1.0;
    return finite_diff_check(
        "total_loss",
        [](Tape& t, const std::vector<Value>& in) {
          return total_loss(in[0], in[1], LossWeights{}).total;
        },
        {pred, gt}, {0}, eps, 10, rng);
  }));

  suite.push_back(NamedCheck{"model_total_loss", [seed](double eps) {
                               return finite_diff_check_model(eps, 4, seed);
                             }});
  return suite;
}

}  // namespace enfnet
