#pragma once

#include <optional>
#include <random>
#include <string>

#include "enfnet/backbone.hpp"
#include "enfnet/config.hpp"
#include "enfnet/params.hpp"
#include "enfnet/tape.hpp"

namespace enfnet {

/// Transposed-conv geometry of the decoder chain: exact x2 upsampling.
inline ConvSpec deconv_spec() { return ConvSpec::explicit_pad(5, 2, 2, 1); }

inline void build_decoder_params(ParamStore& store, const NetworkConfig& cfg,
                                 std::mt19937_64& rng, InitMode mode) {
  const int sc = cfg.side_channels, fc = cfg.fuse_channels;
  // Level 5 fuses (feature, contrast); levels 4..2 add the upsampled map.
  detail::add_deconv_param(store, "decoder.deconv5", 2 * sc, fc, 5, 5, rng, mode);
  for (int lvl = 4; lvl >= 2; --lvl)
    detail::add_deconv_param(store, "decoder.deconv" + std::to_string(lvl), 2 * sc + fc, fc, 5, 5,
                             rng, mode);
  detail::add_conv_param(store, "decoder.local", fc, 2 * sc + fc, 1, 1, rng, mode);
  detail::add_conv_param(store, "score.local", 2, fc, 1, 1, rng, mode);
  detail::add_conv_param(store, "score.global", 2, sc, 1, 1, rng, mode);
}

/// Feature minus its 3x3 local mean: the local foreground/background
/// difference at each level. Constants map to exactly zero.
inline Value contrast_feature(Value xf) {
  return axpby(xf, avg_pool2d_same(xf), 1.0, -1.0);
}

/// Fuses a level's feature and contrast maps (plus the upsampled deeper map
/// when present) and doubles the spatial size with a 5x5/stride-2 transposed
/// conv + relu.
inline Value deconv_fuse(ParamBinder& bind, int level, Value xf, Value xc,
                         std::optional<Value> d_next) {
  std::vector<Value> parts{xf, xc};
  if (d_next) parts.push_back(*d_next);
  Value cat = concat_channels(parts);
  const std::string name = "decoder.deconv" + std::to_string(level);
  return relu(conv2d_transpose(cat, bind(name + ".w"), bind(name + ".b"), deconv_spec()));
}

/// 1x1 conv + relu over the level-1 concatenation; stays at level-1 size.
inline Value local_feature(ParamBinder& bind, Value xf1, Value xc1, Value d2) {
  Value cat = concat_channels({xf1, xc1, d2});
  return relu(detail::conv_layer(bind, cat, "decoder.local", ConvSpec::valid(1)));
}

struct ScoreOutputs {
  Value logits;    // [N,2,h,w]; channel 0 = foreground
  Value probs;     // per-pixel softmax of logits
  Value saliency;  // foreground channel, [N,1,h,w]
};

/// Per-pixel linear head on the local feature plus a broadcast linear head on
/// the global feature, combined into two-class logits and softmaxed.
inline ScoreOutputs score_fusion(ParamBinder& bind, Value local, Value global_feat) {
  const Tensor& g = global_feat.val();
  require(g.h() == 1 && g.w() == 1,
          "score_fusion: global feature must be 1x1 spatially, got [" + g.shape_str() + "]");
  Value local_logits = detail::conv_layer(bind, local, "score.local", ConvSpec::valid(1));
  Value global_logits = detail::conv_layer(bind, global_feat, "score.global", ConvSpec::valid(1));
  ScoreOutputs out;
  out.logits = add_broadcast_hw(local_logits, global_logits);
  out.probs = pixel_softmax2(out.logits);
  out.saliency = slice_channels(out.probs, 0, 1);
  return out;
}

/// Bilinear x2 back to the input resolution; inference-time only.
inline Value predict_fullres(Value saliency) { return bilinear_upsample(saliency, 2); }

}  // namespace enfnet
