#pragma once

#include <array>
#include <optional>
#include <random>

#include "enfnet/backbone.hpp"
#include "enfnet/config.hpp"
#include "enfnet/decoder.hpp"
#include "enfnet/edge_guidance.hpp"
#include "enfnet/losses.hpp"
#include "enfnet/params.hpp"

namespace enfnet {

/// Builds the full parameter set in one fixed order so a given seed yields
/// bit-identical parameters independent of how many guidance blocks are later
/// enabled at forward time.
inline void build_model_params(ParamStore& store, const NetworkConfig& cfg, uint64_t seed,
                               InitMode mode = InitMode::PaperGaussian) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  build_backbone_params(store, cfg, rng, mode);
  build_condition_params(store, cfg, rng, mode);
  build_egb_params(store, cfg, rng, mode);
  build_decoder_params(store, cfg, rng, mode);
}

struct ModelOutputs {
  std::array<Value, 6> side;      // 1-based encoder side features X_i
  std::array<Value, 6> guided;    // edge-aware features (identity where EGB disabled)
  std::array<Value, 6> contrast;  // guided minus local mean
  std::array<Value, 6> fused;     // decoder chain outputs, valid at 5..2
  Value cond;                     // condition features; invalid when egb_count == 0
  Value global_feat;
  Value local;
  Value logits;
  Value probs;
  Value saliency;  // [N,1,S/2,S/2] foreground probability
};

/// Full forward pass at the fusion (half-input) resolution. Levels above
/// cfg.egb_count bypass their guidance block and feed the side feature
/// straight through.
inline ModelOutputs model_forward(ParamBinder& bind, Value image, Value edge,
                                  const NetworkConfig& cfg) {
  ModelOutputs out;
  SideFeatures enc = backbone_forward(bind, image, cfg);
  out.side = enc.x;
  out.global_feat = global_block(bind, enc.level5, cfg);

  if (cfg.egb_count > 0) out.cond = condition_network(bind, edge, cfg);
  for (int lvl = 1; lvl <= 5; ++lvl)
    out.guided[static_cast<size_t>(lvl)] =
        lvl <= cfg.egb_count ? egb_forward(bind, lvl, out.cond, enc.x[static_cast<size_t>(lvl)])
                             : enc.x[static_cast<size_t>(lvl)];

  for (int lvl = 1; lvl <= 5; ++lvl)
    out.contrast[static_cast<size_t>(lvl)] =
        contrast_feature(out.guided[static_cast<size_t>(lvl)]);

  std::optional<Value> deeper;
  for (int lvl = 5; lvl >= 2; --lvl) {
    out.fused[static_cast<size_t>(lvl)] =
        deconv_fuse(bind, lvl, out.guided[static_cast<size_t>(lvl)],
                    out.contrast[static_cast<size_t>(lvl)], deeper);
    deeper = out.fused[static_cast<size_t>(lvl)];
  }

  out.local = local_feature(bind, out.guided[1], out.contrast[1], out.fused[2]);
  ScoreOutputs score = score_fusion(bind, out.local, out.global_feat);
  out.logits = score.logits;
  out.probs = score.probs;
  out.saliency = score.saliency;
  return out;
}

/// Loss head: supervises at the fusion resolution by default, or at full
/// input resolution (bilinear x2 on the prediction) when configured.
inline LossTerms model_loss(Tape& tape, const ModelOutputs& out, const Tensor& gt,
                            const NetworkConfig& cfg, const LossWeights& weights) {
  Value pred = cfg.supervise_fullres ? predict_fullres(out.saliency) : out.saliency;
  Value gt_leaf = tape.leaf(gt);
  return total_loss(pred, gt_leaf, weights);
}

}  // namespace enfnet
