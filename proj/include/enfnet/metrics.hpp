#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "enfnet/tensor.hpp"

namespace enfnet {

constexpr int kThresholdCount = 256;
constexpr double kFMeasureBetaSq = 0.3;  // weights precision over recall

struct PRPoint {
  int threshold = 0;
  double precision = 0.0;
  double recall = 0.0;
};

struct MetricsRecord {
  double max_f = 0.0;
  double mae = 0.0;
  std::array<PRPoint, kThresholdCount> curve{};
};

inline double f_measure(double precision, double recall, double beta_sq = kFMeasureBetaSq) {
  const double denom = beta_sq * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta_sq) * precision * recall / denom;
}

inline double mae(const Tensor& pred, const Tensor& gt) {
  require(pred.same_shape(gt), "mae: shape [" + pred.shape_str() + "] vs [" + gt.shape_str() + "]");
  double acc = 0.0;
  for (int64_t i = 0; i < pred.numel(); ++i) acc += std::abs(pred[i] - gt[i]);
  return acc / static_cast<double>(pred.numel());
}

/// Precision/recall at every integer threshold of the prediction scaled to
/// 0..255. With no predicted positives precision is 1; with an empty ground
/// truth recall is 1.
inline std::array<PRPoint, kThresholdCount> threshold_sweep(const Tensor& pred, const Tensor& gt) {
  require(pred.same_shape(gt),
          "threshold_sweep: shape [" + pred.shape_str() + "] vs [" + gt.shape_str() + "]");
  // Bucket by floor(255 p): a pixel is positive at threshold t iff 255 p >= t,
  // i.e. iff its bucket index is >= t.
  std::array<int64_t, kThresholdCount> pos_hist{}, tp_hist{};
  int64_t gt_pos = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    int b = static_cast<int>(std::floor(255.0 * pred[i]));
    b = std::clamp(b, 0, 255);
    pos_hist[static_cast<size_t>(b)]++;
    if (gt[i] != 0.0) {
      tp_hist[static_cast<size_t>(b)]++;
      gt_pos++;
    }
  }
  std::array<PRPoint, kThresholdCount> out{};
  int64_t pos = 0, tp = 0;
  for (int t = kThresholdCount - 1; t >= 0; --t) {
    pos += pos_hist[static_cast<size_t>(t)];
    tp += tp_hist[static_cast<size_t>(t)];
    out[static_cast<size_t>(t)].threshold = t;
    out[static_cast<size_t>(t)].precision = pos == 0 ? 1.0 : static_cast<double>(tp) / pos;
    out[static_cast<size_t>(t)].recall = gt_pos == 0 ? 1.0 : static_cast<double>(tp) / gt_pos;
  }
  return out;
}

/// Averages per-threshold precision/recall over images, then takes the best
/// F-measure over the averaged curve; MAE is averaged per image.
class MetricsAccumulator {
 public:
  void add(const Tensor& pred, const Tensor& gt) {
    auto curve = threshold_sweep(pred, gt);
    for (int t = 0; t < kThresholdCount; ++t) {
      precision_sum_[static_cast<size_t>(t)] += curve[static_cast<size_t>(t)].precision;
      recall_sum_[static_cast<size_t>(t)] += curve[static_cast<size_t>(t)].recall;
    }
    mae_sum_ += mae(pred, gt);
    count_++;
  }

  int count() const { return count_; }

  MetricsRecord finalize() const {
    require(count_ > 0, "metrics: empty dataset");
    MetricsRecord rec;
    rec.mae = mae_sum_ / count_;
    for (int t = 0; t < kThresholdCount; ++t) {
      PRPoint& p = rec.curve[static_cast<size_t>(t)];
      p.threshold = t;
      p.precision = precision_sum_[static_cast<size_t>(t)] / count_;
      p.recall = recall_sum_[static_cast<size_t>(t)] / count_;
      rec.max_f = std::max(rec.max_f, f_measure(p.precision, p.recall));
    }
    return rec;
  }

 private:
  std::array<double, kThresholdCount> precision_sum_{};
  std::array<double, kThresholdCount> recall_sum_{};
  double mae_sum_ = 0.0;
  int count_ = 0;
};

inline MetricsRecord aggregate(const std::vector<std::pair<Tensor, Tensor>>& pairs) {
  MetricsAccumulator acc;
  for (const auto& [pred, gt] : pairs) acc.add(pred, gt);
  return acc.finalize();
}

/// Header row, one row per threshold, then a summary row.
inline void write_metrics_csv(const MetricsRecord& rec, std::ostream& os) {
  os << "threshold,precision,recall,f_measure\n";
  os.precision(17);
  for (const PRPoint& p : rec.curve)
    os << p.threshold << "," << p.precision << "," << p.recall << ","
       << f_measure(p.precision, p.recall) << "\n";
  os << "summary,max_f=" << rec.max_f << ",mae=" << rec.mae << ",\n";
}

}  // namespace enfnet
