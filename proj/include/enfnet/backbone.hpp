#pragma once

#include <array>
#include <random>
#include <string>

#include "enfnet/config.hpp"
#include "enfnet/params.hpp"
#include "enfnet/tape.hpp"

namespace enfnet {

/// How freshly built parameters are drawn. PaperGaussian (std 0.01) is the
/// training default; ScaledGaussian draws at 1/sqrt(fan-in) scale, which keeps
/// activations and gradients O(1) so finite differences stay resolvable in
/// gradient-check fixtures.
enum class InitMode { PaperGaussian, ScaledGaussian };

namespace detail {
inline void add_conv_param(ParamStore& store, const std::string& name, int cout, int cin, int kh,
                           int kw, std::mt19937_64& rng, InitMode mode, double bias_init = 0.0) {
  Tensor w(cout, cin, kh, kw);
  const double sigma =
      mode == InitMode::PaperGaussian ? 0.01 : 1.0 / std::sqrt(static_cast<double>(cin) * kh * kw);
  fill_gaussian(w, rng, sigma);
  store.add(name + ".w", std::move(w));
  Tensor b(1, cout, 1, 1);
  b.fill(bias_init);
  store.add(name + ".b", std::move(b));
}

// Transposed-conv weights are stored [Cin, Cout, kh, kw].
inline void add_deconv_param(ParamStore& store, const std::string& name, int cin, int cout, int kh,
                             int kw, std::mt19937_64& rng, InitMode mode) {
  Tensor w(cin, cout, kh, kw);
  const double sigma =
      mode == InitMode::PaperGaussian ? 0.01 : 1.0 / std::sqrt(static_cast<double>(cin) * kh * kw);
  fill_gaussian(w, rng, sigma);
  store.add(name + ".w", std::move(w));
  store.add(name + ".b", Tensor(1, cout, 1, 1));
}

inline Value conv_layer(ParamBinder& bind, Value x, const std::string& name, const ConvSpec& spec) {
  return conv2d(x, bind(name + ".w"), bind(name + ".b"), spec);
}

inline Value conv_relu_layer(ParamBinder& bind, Value x, const std::string& name,
                             const ConvSpec& spec) {
  return conv2d_relu(x, bind(name + ".w"), bind(name + ".b"), spec);
}
}  // namespace detail

/// Convolutions per encoder block (VGG-16 layout, first five blocks).
constexpr std::array<int, 5> kBlockConvCounts{2, 2, 3, 3, 3};

inline void build_backbone_params(ParamStore& store, const NetworkConfig& cfg,
                                  std::mt19937_64& rng, InitMode mode) {
  cfg.validate();
  int cin = 3;
  for (int blk = 0; blk < 5; ++blk) {
    const int cout = cfg.block_channels[static_cast<size_t>(blk)];
    for (int conv = 0; conv < kBlockConvCounts[static_cast<size_t>(blk)]; ++conv) {
      detail::add_conv_param(store,
                             "backbone.block" + std::to_string(blk + 1) + ".conv" +
                                 std::to_string(conv + 1),
                             cout, conv == 0 ? cin : cout, 3, 3, rng, mode);
    }
    cin = cout;
  }
  for (int lvl = 1; lvl <= 5; ++lvl)
    detail::add_conv_param(store, "backbone.side" + std::to_string(lvl), cfg.side_channels,
                           cfg.block_channels[static_cast<size_t>(lvl - 1)], 3, 3, rng, mode);
  int gin = cfg.block_channels[4];
  for (size_t j = 0; j < cfg.global_kernels.size(); ++j) {
    const int k = cfg.global_kernels[j];
    detail::add_conv_param(store, "global.conv" + std::to_string(j + 1), cfg.side_channels, gin, k,
                           k, rng, mode);
    gin = cfg.side_channels;
  }
}

struct SideFeatures {
  std::array<Value, 6> x;  // 1-based; x[i] has spatial size input_size / 2^i
  Value level5;            // pooled block-5 output before the side projection
};

/// Five blocks of SAME 3x3 convs + relu, each followed by a 2x2 max pool.
/// Side output i is one 3x3 conv + relu on the pooled block-i output,
/// projected to side_channels.
inline SideFeatures backbone_forward(ParamBinder& bind, Value image, const NetworkConfig& cfg) {
  const Tensor& img = image.val();
  require(img.c() == 3, "backbone: expected 3 input channels, got " + std::to_string(img.c()));
  require(img.h() == cfg.input_size && img.w() == cfg.input_size,
          "backbone: expected " + std::to_string(cfg.input_size) + "x" +
              std::to_string(cfg.input_size) + " input, got " + std::to_string(img.h()) + "x" +
              std::to_string(img.w()));
  SideFeatures out;
  Value x = image;
  for (int blk = 1; blk <= 5; ++blk) {
    for (int conv = 1; conv <= kBlockConvCounts[static_cast<size_t>(blk - 1)]; ++conv)
      x = detail::conv_relu_layer(
          bind, x, "backbone.block" + std::to_string(blk) + ".conv" + std::to_string(conv),
          ConvSpec::same(3));
    x = max_pool2d(x);
    out.x[static_cast<size_t>(blk)] = detail::conv_relu_layer(
        bind, x, "backbone.side" + std::to_string(blk), ConvSpec::same(3));
  }
  out.level5 = x;
  return out;
}

/// Chain of VALID convs + relu reducing the deepest encoder map to a 1x1
/// whole-image descriptor at side_channels width.
inline Value global_block(ParamBinder& bind, Value level5, const NetworkConfig& cfg) {
  Value x = level5;
  for (size_t j = 0; j < cfg.global_kernels.size(); ++j)
    x = relu(detail::conv_layer(bind, x, "global.conv" + std::to_string(j + 1),
                                ConvSpec::valid(cfg.global_kernels[j])));
  const Tensor& g = x.val();
  require(g.h() == 1 && g.w() == 1,
          "global_block: reduction chain ended at " + std::to_string(g.h()) + "x" +
              std::to_string(g.w()) + " instead of 1x1");
  return x;
}

}  // namespace enfnet
