#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "enfnet/checkpoint.hpp"
#include "enfnet/config.hpp"
#include "enfnet/data_io.hpp"
#include "enfnet/metrics.hpp"
#include "enfnet/model.hpp"

namespace enfnet {

struct AdamConstants {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update over every parameter, in registration
/// order. step_t is 1-based.
inline void adam_step(ParamStore& store, double lr, int64_t step_t,
                      const AdamConstants& k = AdamConstants{}) {
  const double bc1 = 1.0 - std::pow(k.beta1, static_cast<double>(step_t));
  const double bc2 = 1.0 - std::pow(k.beta2, static_cast<double>(step_t));
  for (Param& p : store.items()) {
    p.ensure_grad_slot();
    p.ensure_moment_slots();
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i];
      p.m[i] = k.beta1 * p.m[i] + (1.0 - k.beta1) * g;
      p.v[i] = k.beta2 * p.v[i] + (1.0 - k.beta2) * g * g;
      const double mhat = p.m[i] / bc1;
      const double vhat = p.v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + k.eps);
    }
  }
}

struct StepRecord {
  int step = 0;
  int epoch = 0;
  double ce = 0.0;
  double boundary = 0.0;
  double total = 0.0;
};

inline void write_loss_csv(const std::vector<StepRecord>& log, std::ostream& os) {
  os << "step,epoch,ce_loss,boundary_loss,total_loss\n";
  os.precision(17);
  for (const StepRecord& r : log)
    os << r.step << "," << r.epoch << "," << r.ce << "," << r.boundary << "," << r.total << "\n";
}

struct TrainResult {
  std::vector<StepRecord> log;
};

/// Optimization loop: deterministic shuffled order under the seed, one Adam
/// update per batch, a checkpoint per epoch when out_dir is given. Aborts
/// with the step index if the loss ever goes non-finite.
inline TrainResult train(const Config& cfg, const DatasetManifest& manifest, ParamStore& store,
                         const std::string& out_dir = "") {
  cfg.validate();
  require(!manifest.entries.empty(), "train: empty dataset");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  std::vector<Sample> samples;
  samples.reserve(manifest.entries.size() * (cfg.train.augment ? 2 : 1));
  for (const ManifestEntry& e : manifest.entries) {
    samples.push_back(prepare_sample(e, cfg.net));
    if (cfg.train.augment) samples.push_back(hflip_augment(samples.back()));
  }

  std::mt19937_64 shuffle_rng(cfg.train.seed);
  TrainResult result;
  int64_t opt_step = 0;

  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.train.batch_size)) {
      const size_t batch_end = std::min(order.size(), pos + static_cast<size_t>(cfg.train.batch_size));
      const int batch_n = static_cast<int>(batch_end - pos);
      store.zero_grads();
      double ce = 0.0, boundary = 0.0, total = 0.0;

      for (size_t bi = pos; bi < batch_end; ++bi) {
        const Sample& s = samples[order[bi]];
        Tape tape;
        ParamBinder bind(tape, store);
        Value image = tape.leaf(s.image);
        Value edge = tape.leaf(s.edge);
        ModelOutputs out = model_forward(bind, image, edge, cfg.net);
        LossTerms loss = model_loss(tape, out, s.gt, cfg.net, cfg.train.weights);
        const double lt = loss.total.val()[0];
        if (!std::isfinite(lt))
          throw NumericalError("train: non-finite loss at step " + std::to_string(opt_step + 1) +
                               " (epoch " + std::to_string(epoch) + ", sample '" + s.id + "')");
        ce += loss.cross_entropy.val()[0];
        boundary += loss.boundary.val()[0];
        total += lt;
        tape.backward(loss.total);
        bind.accumulate_grads();
      }

      if (batch_n > 1)
        for (Param& p : store.items())
          for (int64_t i = 0; i < p.grad.numel(); ++i) p.grad[i] /= batch_n;

      ++opt_step;
      adam_step(store, cfg.train.learning_rate, opt_step);
      result.log.push_back(StepRecord{static_cast<int>(opt_step), epoch, ce / batch_n,
                                      boundary / batch_n, total / batch_n});
    }

    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
      save_checkpoint(store, (std::filesystem::path(out_dir) / name).string());
    }
  }

  if (!out_dir.empty())
    save_checkpoint(store, (std::filesystem::path(out_dir) / "final.ckpt").string());
  return result;
}

/// Runs the model over a dataset and aggregates the saliency metrics at the
/// input resolution. Parameters are read-only; evaluating twice yields the
/// same record.
inline MetricsRecord evaluate(ParamStore& store, const DatasetManifest& manifest,
                              const NetworkConfig& cfg) {
  require(!manifest.entries.empty(), "evaluate: empty dataset");
  MetricsAccumulator acc;
  for (const ManifestEntry& e : manifest.entries) {
    Sample s = prepare_sample(e, cfg);
    Tape tape;
    ParamBinder bind(tape, store);
    Value image = tape.leaf(s.image);
    Value edge = tape.leaf(s.edge);
    ModelOutputs out = model_forward(bind, image, edge, cfg);
    Value full = predict_fullres(out.saliency);
    Tensor gt_full = load_mask_binary(e.mask_path, cfg.input_size);
    acc.add(full.val(), gt_full);
  }
  return acc.finalize();
}

}  // namespace enfnet
