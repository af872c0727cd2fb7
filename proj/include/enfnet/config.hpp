#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "enfnet/tensor.hpp"

namespace enfnet {

struct LossWeights {
  double lambda = 1.0;  // data term
  double gamma = 1.0;   // boundary term
  double epsilon = 1e-7;

  void validate() const {
    require(lambda >= 0.0 && gamma >= 0.0, "loss weights must be nonnegative");
    require(epsilon > 0.0 && epsilon < 0.5, "loss epsilon must lie in (0, 0.5)");
  }
};

/// Network geometry. The paper preset reproduces the published layer sizes;
/// the desk preset is small enough to train and gradient-check on a CPU.
struct NetworkConfig {
  int input_size = 96;
  std::array<int, 5> block_channels{16, 32, 48, 64, 64};
  int side_channels = 32;
  int fuse_channels = 32;
  std::vector<int> global_kernels{3, 1, 1};
  int egb_count = 5;             // 0, 3 or 5 edge guidance blocks (levels 1..egb_count)
  bool supervise_fullres = false;

  /// Spatial size of encoder level i (1-based); level 1 is also the
  /// supervision and fusion resolution.
  int level_size(int level) const { return input_size >> level; }

  void validate() const {
    require(input_size > 0 && input_size % 32 == 0,
            "NetworkConfig: input_size must be a positive multiple of 32, got " +
                std::to_string(input_size));
    for (int c : block_channels)
      require(c > 0, "NetworkConfig: block_channels must be positive");
    require(side_channels > 0, "NetworkConfig: side_channels must be positive");
    require(fuse_channels > 0, "NetworkConfig: fuse_channels must be positive");
    require(egb_count == 0 || egb_count == 3 || egb_count == 5,
            "NetworkConfig: egb_count must be 0, 3 or 5, got " + std::to_string(egb_count));
    require(!global_kernels.empty(), "NetworkConfig: global_kernels must not be empty");
    int s = level_size(5);
    for (int k : global_kernels) {
      require(k >= 1 && k <= s,
              "NetworkConfig: global kernel " + std::to_string(k) + " does not fit a " +
                  std::to_string(s) + "x" + std::to_string(s) + " map");
      s = s - k + 1;
    }
    require(s == 1, "NetworkConfig: global_kernels reduce the level-5 map to " + std::to_string(s) +
                        "x" + std::to_string(s) + " instead of 1x1");
  }
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 10;
  int batch_size = 1;
  uint64_t seed = 1;
  LossWeights weights;
  bool augment = true;

  void validate() const {
    require(learning_rate > 0.0, "TrainConfig: learning_rate must be positive");
    require(epochs >= 1, "TrainConfig: epochs must be >= 1");
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    weights.validate();
  }
};

struct Config {
  NetworkConfig net;
  TrainConfig train;

  void validate() const {
    net.validate();
    train.validate();
  }
};

/// Small geometry: trains on one CPU core in minutes.
inline Config desk_config() {
  Config c;
  c.net.input_size = 96;
  c.net.block_channels = {16, 32, 48, 64, 64};
  c.net.side_channels = 32;
  c.net.fuse_channels = 32;
  c.net.global_kernels = {3, 1, 1};
  c.train.learning_rate = 1e-4;
  return c;
}

/// Published geometry (352 input, VGG-16 widths). Used for shape conformance;
/// far too slow to train here.
inline Config paper_config() {
  Config c;
  c.net.input_size = 352;
  c.net.block_channels = {64, 128, 256, 512, 512};
  c.net.side_channels = 128;
  c.net.fuse_channels = 128;
  c.net.global_kernels = {5, 5, 3};
  c.train.learning_rate = 1e-5;
  return c;
}

inline Config config_preset(const std::string& name) {
  if (name == "desk") return desk_config();
  if (name == "paper") return paper_config();
  throw ValidationError("unknown preset '" + name + "' (expected 'desk' or 'paper')");
}

/// Parses a flat JSON config. Every key is optional; unknown keys are
/// rejected so hyperparameter typos cannot pass silently. An optional
/// "preset" key selects the base configuration the other keys override.
inline Config parse_config_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  require(j.is_object(), "config: top-level JSON value must be an object");

  Config cfg = j.contains("preset") ? config_preset(j["preset"].get<std::string>())
                                    : desk_config();

  static const char* known[] = {"preset",         "input_size",     "block_channels",
                                "side_channels",  "fuse_channels",  "global_kernels",
                                "egb_count",      "supervise_fullres", "learning_rate",
                                "epochs",         "batch_size",     "seed",
                                "lambda",         "gamma",          "epsilon",
                                "augment"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || (it.key() == k);
    require(ok, "config: unknown key '" + it.key() + "'");
  }

  try {
    if (j.contains("input_size")) cfg.net.input_size = j["input_size"].get<int>();
    if (j.contains("block_channels")) {
      auto v = j["block_channels"].get<std::vector<int>>();
      require(v.size() == 5, "config: block_channels must list exactly 5 values");
      std::copy(v.begin(), v.end(), cfg.net.block_channels.begin());
    }
    if (j.contains("side_channels")) cfg.net.side_channels = j["side_channels"].get<int>();
    if (j.contains("fuse_channels"))
      cfg.net.fuse_channels = j["fuse_channels"].get<int>();
    else if (j.contains("side_channels"))
      cfg.net.fuse_channels = cfg.net.side_channels;
    if (j.contains("global_kernels")) cfg.net.global_kernels = j["global_kernels"].get<std::vector<int>>();
    if (j.contains("egb_count")) cfg.net.egb_count = j["egb_count"].get<int>();
    if (j.contains("supervise_fullres")) cfg.net.supervise_fullres = j["supervise_fullres"].get<bool>();
    if (j.contains("learning_rate")) cfg.train.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("epochs")) cfg.train.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) cfg.train.batch_size = j["batch_size"].get<int>();
    if (j.contains("seed")) cfg.train.seed = j["seed"].get<uint64_t>();
    if (j.contains("lambda")) cfg.train.weights.lambda = j["lambda"].get<double>();
    if (j.contains("gamma")) cfg.train.weights.gamma = j["gamma"].get<double>();
    if (j.contains("epsilon")) cfg.train.weights.epsilon = j["epsilon"].get<double>();
    if (j.contains("augment")) cfg.train.augment = j["augment"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }

  cfg.validate();
  return cfg;
}

}  // namespace enfnet
