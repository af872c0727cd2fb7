#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "enfnet/gradcheck.hpp"
#include "enfnet/losses.hpp"
#include "enfnet/tape.hpp"

using namespace enfnet;

namespace {
constexpr double kEps = 1e-7;

double ce_value(const Tensor& pred, const Tensor& gt) {
  Tape tape;
  return cross_entropy_loss(tape.leaf(pred), tape.leaf(gt), kEps).val()[0];
}

double iou_value(const Tensor& a, const Tensor& b) {
  Tape tape;
  return iou_boundary_loss(tape.leaf(a), tape.leaf(b)).val()[0];
}
}  // namespace

TEST(CrossEntropyTest, PerfectPredictionCostsOnlyTheClamp) {
  Tensor gt(1, 1, 4, 4);
  for (int x = 0; x < 4; ++x) gt.at(0, 0, 0, x) = 1.0;
  Tensor pred = gt;
  EXPECT_NEAR(ce_value(pred, gt), -std::log(1.0 - kEps), 1e-12);
  EXPECT_NEAR(ce_value(pred, gt), 1e-7, 1e-9);
}

TEST(CrossEntropyTest, UniformHalfGivesLogTwo) {
  Tensor pred(1, 1, 5, 5);
  pred.fill(0.5);
  for (double frac : {0.0, 0.3, 1.0}) {
    Tensor gt(1, 1, 5, 5);
    for (int64_t i = 0; i < static_cast<int64_t>(frac * 25); ++i) gt[i] = 1.0;
    EXPECT_DOUBLE_EQ(ce_value(pred, gt), std::log(2.0));
  }
}

TEST(CrossEntropyTest, FullyWrongPredictionHitsClampFloor) {
  Tensor pred(1, 1, 3, 3);
  pred.fill(1.0);
  Tensor gt(1, 1, 3, 3);  // all background
  EXPECT_NEAR(ce_value(pred, gt), -std::log(kEps), 1e-9);
  EXPECT_NEAR(ce_value(pred, gt), 16.118095650958319, 1e-9);
}

TEST(CrossEntropyTest, RejectsShapeMismatchAndNonBinaryMask) {
  Tape tape;
  Tensor pred(1, 1, 4, 4), widegt(1, 1, 4, 5);
  EXPECT_THROW(cross_entropy_loss(tape.leaf(pred), tape.leaf(widegt), kEps), ValidationError);
  Tensor graygt(1, 1, 4, 4);
  graygt[3] = 0.5;
  EXPECT_THROW(cross_entropy_loss(tape.leaf(pred), tape.leaf(graygt), kEps), ValidationError);
}

TEST(CrossEntropyTest, NonNegativeAndMonotoneTowardTruth) {
  std::mt19937_64 rng(71);
  Tensor gt(1, 1, 4, 4);
  std::bernoulli_distribution coin(0.5);
  for (int64_t i = 0; i < 16; ++i) gt[i] = coin(rng) ? 1.0 : 0.0;
  double prev = 1e300;
  for (double q : {0.55, 0.7, 0.9, 0.99}) {
    Tensor pred(1, 1, 4, 4);
    for (int64_t i = 0; i < 16; ++i) pred[i] = gt[i] == 1.0 ? q : 1.0 - q;
    const double loss = ce_value(pred, gt);
    EXPECT_GE(loss, 0.0);
    EXPECT_LT(loss, prev);
    prev = loss;
  }
}

TEST(IouBoundaryTest, IdenticalBinaryMapsScoreNearZero) {
  Tensor c(1, 1, 4, 4);
  for (int x = 0; x < 4; ++x) c.at(0, 0, 1, x) = 1.0;  // k = 4 boundary pixels
  EXPECT_NEAR(iou_value(c, c), 0.0, 1e-8);
}

TEST(IouBoundaryTest, DisjointMapsScoreExactlyOne) {
  Tensor a(1, 1, 4, 4), b(1, 1, 4, 4);
  a.at(0, 0, 0, 0) = 1.0;
  b.at(0, 0, 3, 3) = 1.0;
  EXPECT_EQ(iou_value(a, b), 1.0);
}

TEST(IouBoundaryTest, HalfOverlapScoresHalf) {
  Tensor c(1, 1, 4, 4), chat(1, 1, 4, 4);
  for (int x = 0; x < 4; ++x) c.at(0, 0, 0, x) = 1.0;  // 4 pixels
  chat.at(0, 0, 0, 0) = 1.0;                           // overlaps 2 of them
  chat.at(0, 0, 0, 1) = 1.0;
  chat.at(0, 0, 2, 0) = 1.0;  // 2 elsewhere
  chat.at(0, 0, 2, 1) = 1.0;
  EXPECT_NEAR(iou_value(c, chat), 0.5, 1e-8);  // 1 - 2*2/(4+4)
}

TEST(IouBoundaryTest, SymmetricBitExactAndBounded) {
  std::mt19937_64 rng(73);
  for (int iter = 0; iter < 20; ++iter) {
    Tensor a(1, 1, 5, 5), b(1, 1, 5, 5);
    fill_uniform(a, rng, 0.0, 1.0);
    fill_uniform(b, rng, 0.0, 1.0);
    const double ab = iou_value(a, b);
    const double ba = iou_value(b, a);
    EXPECT_EQ(ab, ba);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
  }
}

TEST(IouBoundaryTest, RejectsShapeMismatch) {
  Tape tape;
  EXPECT_THROW(
      iou_boundary_loss(tape.leaf(Tensor(1, 1, 4, 4)), tape.leaf(Tensor(1, 1, 4, 5))),
      ValidationError);
}

TEST(TotalLossTest, GammaZeroReducesToCrossEntropy) {
  std::mt19937_64 rng(79);
  Tensor pred(1, 1, 6, 6);
  fill_uniform(pred, rng, 0.05, 0.95);
  Tensor gt(1, 1, 6, 6);
  for (int y = 2; y < 5; ++y)
    for (int x = 2; x < 5; ++x) gt.at(0, 0, y, x) = 1.0;

  LossWeights w;
  w.gamma = 0.0;
  Tape tape;
  LossTerms t = total_loss(tape.leaf(pred), tape.leaf(gt), w);
  EXPECT_EQ(t.total.val()[0], t.cross_entropy.val()[0]);
}

TEST(TotalLossTest, UnitWeightsAddTheTwoTerms) {
  std::mt19937_64 rng(83);
  Tensor pred(1, 1, 6, 6);
  fill_uniform(pred, rng, 0.05, 0.95);
  Tensor gt(1, 1, 6, 6);
  for (int y = 1; y < 4; ++y)
    for (int x = 1; x < 4; ++x) gt.at(0, 0, y, x) = 1.0;
  Tape tape;
  LossTerms t = total_loss(tape.leaf(pred), tape.leaf(gt), LossWeights{});
  EXPECT_DOUBLE_EQ(t.total.val()[0], t.cross_entropy.val()[0] + t.boundary.val()[0]);
  EXPECT_TRUE(std::isfinite(t.total.val()[0]));
}

TEST(TotalLossTest, FiniteAcrossTheWholePredictionRange) {
  Tensor gt(1, 1, 4, 4);
  gt.at(0, 0, 1, 1) = 1.0;
  for (double v : {0.0, 1e-12, 0.5, 1.0 - 1e-12, 1.0}) {
    Tensor pred(1, 1, 4, 4);
    pred.fill(v);
    Tape tape;
    LossTerms t = total_loss(tape.leaf(pred), tape.leaf(gt), LossWeights{});
    EXPECT_TRUE(std::isfinite(t.total.val()[0])) << "pred " << v;
  }
}

// Gradient of the full loss with respect to the logits feeding the softmax.
TEST(TotalLossTest, GradientWrtLogitsMatchesCentralDifferences) {
  std::mt19937_64 rng(89);
  Tensor logits(1, 2, 6, 6);
  fill_uniform(logits, rng, -1.5, 1.5);
  Tensor gt(1, 1, 6, 6);
  for (int y = 2; y < 5; ++y)
    for (int x = 1; x < 4; ++x) gt.at(0, 0, y, x) = 1.0;

  GradCheckReport rep = finite_diff_check(
      "loss_vs_logits",
      [&gt](Tape& t, const std::vector<Value>& in) {
        Value pred = slice_channels(pixel_softmax2(in[0]), 0, 1);
        return total_loss(pred, t.leaf(gt), LossWeights{}).total;
      },
      {logits}, {0}, kGradCheckEps, 24, rng);
  EXPECT_LT(rep.max_rel_err, 1e-4);
  EXPECT_GT(rep.checked, 10);
}
