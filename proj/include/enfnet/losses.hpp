#pragma once

#include "enfnet/config.hpp"
#include "enfnet/tape.hpp"

namespace enfnet {

struct LossTerms {
  Value total;
  Value cross_entropy;
  Value boundary;
};

/// Weighted sum of the pixel data term and the soft boundary-overlap term:
/// lambda * CE(pred, gt) + gamma * (1 - dice(boundary(gt), boundary(pred))).
inline LossTerms total_loss(Value pred, Value gt, const LossWeights& w) {
  w.validate();
  LossTerms t;
  t.cross_entropy = cross_entropy_loss(pred, gt, w.epsilon);
  Value gt_boundary = boundary_map(gt);
  Value pred_boundary = boundary_map(pred);
  t.boundary = iou_boundary_loss(gt_boundary, pred_boundary);
  t.total = axpby(t.cross_entropy, t.boundary, w.lambda, w.gamma);
  return t;
}

}  // namespace enfnet
