#pragma once

#include <algorithm>
#include <array>
#include <random>
#include <string>

#include "enfnet/backbone.hpp"
#include "enfnet/config.hpp"
#include "enfnet/params.hpp"
#include "enfnet/tape.hpp"

namespace enfnet {

/// Per-branch conv geometry of the five edge guidance blocks. The stride
/// product of level i equals 2^(i-1), taking the half-resolution condition
/// features down to the level-i feature size.
struct EgbBranchGeometry {
  int k1, s1, k2, s2;
};

inline const std::array<EgbBranchGeometry, 5>& egb_geometry() {
  static const std::array<EgbBranchGeometry, 5> g{{
      {3, 1, 3, 1},  // level 1: full resolution
      {3, 2, 3, 1},  // level 2: /2
      {3, 2, 3, 2},  // level 3: /4
      {3, 2, 5, 4},  // level 4: /8
      {5, 4, 5, 4},  // level 5: /16
  }};
  return g;
}

/// Dependency-free stand-in for a learned edge detector: Sobel gradient
/// magnitude of the gray image, normalized per image, then 2x2 area-averaged
/// to the level-1 resolution. Any [0,1] single-channel map of the same size
/// can be substituted from disk.
inline Tensor extract_edge_map(const Tensor& image) {
  require(image.c() == 3, "extract_edge_map: expected RGB input, got " +
                              std::to_string(image.c()) + " channels");
  Tensor gray(image.n(), 1, image.h(), image.w());
  for (int n = 0; n < image.n(); ++n)
    for (int y = 0; y < image.h(); ++y)
      for (int x = 0; x < image.w(); ++x)
        gray.at(n, 0, y, x) = (image.at(n, 0, y, x) + image.at(n, 1, y, x) +
                               image.at(n, 2, y, x)) / 3.0;
  Tensor mag = sobel_magnitude(gray);
  for (int n = 0; n < mag.n(); ++n) {
    double mx = 0.0;
    for (int y = 0; y < mag.h(); ++y)
      for (int x = 0; x < mag.w(); ++x) mx = std::max(mx, mag.at(n, 0, y, x));
    if (mx > 0.0)
      for (int y = 0; y < mag.h(); ++y)
        for (int x = 0; x < mag.w(); ++x) mag.at(n, 0, y, x) /= mx;
  }
  Tensor down = area_downsample2(mag);
  for (int64_t i = 0; i < down.numel(); ++i) down[i] = std::clamp(down[i], 0.0, 1.0);
  return down;
}

inline void build_condition_params(ParamStore& store, const NetworkConfig& cfg,
                                   std::mt19937_64& rng, InitMode mode) {
  int cin = 1;
  for (int j = 1; j <= 4; ++j) {
    detail::add_conv_param(store, "cn.conv" + std::to_string(j), cfg.side_channels, cin, 3, 3, rng,
                           mode);
    cin = cfg.side_channels;
  }
}

inline void build_egb_params(ParamStore& store, const NetworkConfig& cfg, std::mt19937_64& rng,
                             InitMode mode) {
  for (int lvl = 1; lvl <= 5; ++lvl) {
    const auto& geo = egb_geometry()[static_cast<size_t>(lvl - 1)];
    for (const char* branch : {"gamma", "beta"}) {
      const std::string base = "egb" + std::to_string(lvl) + "." + branch;
      detail::add_conv_param(store, base + ".conv1", cfg.side_channels, cfg.side_channels, geo.k1,
                             geo.k1, rng, mode);
      // The scale branch opens at gamma == 1 so every block starts as an
      // identity modulation.
      const double bias_init = std::string(branch) == "gamma" ? 1.0 : 0.0;
      detail::add_conv_param(store, base + ".conv2", cfg.side_channels, cfg.side_channels, geo.k2,
                             geo.k2, rng, mode, bias_init);
    }
  }
}

/// Four SAME 3x3 convs + relu over the edge map; all EGB branches read from
/// this shared feature stack.
inline Value condition_network(ParamBinder& bind, Value edge, const NetworkConfig& cfg) {
  const Tensor& e = edge.val();
  const int expect = cfg.level_size(1);
  require(e.c() == 1 && e.h() == expect && e.w() == expect,
          "condition_network: expected [N,1," + std::to_string(expect) + "," +
              std::to_string(expect) + "] edge map, got [" + e.shape_str() + "]");
  Value x = edge;
  for (int j = 1; j <= 4; ++j)
    x = relu(detail::conv_layer(bind, x, "cn.conv" + std::to_string(j), ConvSpec::same(3)));
  return x;
}

namespace detail {
inline Value egb_branch(ParamBinder& bind, Value cond, int level, const char* branch) {
  const auto& geo = egb_geometry()[static_cast<size_t>(level - 1)];
  const std::string base = "egb" + std::to_string(level) + "." + branch;
  Value x = relu(conv_layer(bind, cond, base + ".conv1", ConvSpec::same(geo.k1, geo.s1)));
  return conv_layer(bind, x, base + ".conv2", ConvSpec::same(geo.k2, geo.s2));
}
}  // namespace detail

/// Spatially feature-wise affine modulation: scale and shift maps are derived
/// from the shared condition features and applied as x * gamma + beta.
inline Value egb_forward(ParamBinder& bind, int level, Value cond, Value x_i) {
  Value gamma = detail::egb_branch(bind, cond, level, "gamma");
  Value beta = detail::egb_branch(bind, cond, level, "beta");
  require(gamma.val().same_shape(x_i.val()),
          "egb_forward: level " + std::to_string(level) + " branch output [" +
              gamma.val().shape_str() + "] does not match side feature [" +
              x_i.val().shape_str() + "]");
  return eltwise_add(eltwise_mul(x_i, gamma), beta);
}

}  // namespace enfnet
