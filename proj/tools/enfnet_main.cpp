// Command-line front end: train / predict / eval / gradcheck.
//
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "enfnet/checkpoint.hpp"
#include "enfnet/config.hpp"
#include "enfnet/data_io.hpp"
#include "enfnet/gradcheck.hpp"
#include "enfnet/metrics.hpp"
#include "enfnet/model.hpp"
#include "enfnet/runtime.hpp"
#include "enfnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace enfnet;

namespace {

Config load_config(const std::string& path) {
  if (path.empty()) return desk_config();
  std::ifstream is(path);
  if (!is.good()) throw ValidationError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_json(ss.str());
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, int egb, int64_t seed) {
  Config cfg = load_config(config_path);
  if (egb >= 0) cfg.net.egb_count = egb;
  if (seed >= 0) cfg.train.seed = static_cast<uint64_t>(seed);
  cfg.validate();

  DatasetManifest manifest = load_dataset(data_dir);
  ParamStore store;
  build_model_params(store, cfg.net, cfg.train.seed);

  TrainResult result = train(cfg, manifest, store, out_dir);

  std::ofstream csv(fs::path(out_dir) / "loss.csv");
  if (!csv.good()) throw ValidationError("train: cannot write loss CSV under '" + out_dir + "'");
  write_loss_csv(result.log, csv);

  if (!result.log.empty())
    std::cout << "trained " << result.log.size() << " steps; final total loss "
              << result.log.back().total << "\n";
  return 0;
}

int cmd_predict(const std::string& config_path, const std::string& checkpoint_path,
                const std::string& images_dir, const std::string& out_dir, int egb) {
  Config cfg = load_config(config_path);
  if (egb >= 0) cfg.net.egb_count = egb;
  cfg.validate();

  ParamStore store;
  build_model_params(store, cfg.net, cfg.train.seed);
  adopt_checkpoint(store, load_checkpoint(checkpoint_path), checkpoint_path);

  require(fs::is_directory(images_dir), "predict: missing images directory '" + images_dir + "'");
  std::map<std::string, std::string> images, edges;
  for (const auto& e : fs::directory_iterator(images_dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".png") continue;
    std::string stem = e.path().stem().string();
    if (stem.size() > 5 && stem.ends_with(kEdgeSuffix))
      edges[stem.substr(0, stem.size() - 5)] = e.path().string();
    else
      images[stem] = e.path().string();
  }
  require(!images.empty(), "predict: no PNG images under '" + images_dir + "'");
  fs::create_directories(out_dir);

  for (const auto& [stem, path] : images) {
    ManifestEntry entry;
    entry.stem = stem;
    entry.image_path = path;
    entry.mask_path.clear();
    if (auto it = edges.find(stem); it != edges.end()) entry.edge_path = it->second;

    const int s = cfg.net.input_size;
    Tensor image = bilinear_resize_fwd(detail::to_rgb(read_png(path)), s, s);
    for (int64_t i = 0; i < image.numel(); ++i) image[i] = std::clamp(image[i], 0.0, 1.0);
    Tensor edge;
    if (!entry.edge_path.empty()) {
      edge = bilinear_resize_fwd(detail::to_gray(read_png(entry.edge_path)), s / 2, s / 2);
      for (int64_t i = 0; i < edge.numel(); ++i) edge[i] = std::clamp(edge[i], 0.0, 1.0);
    } else {
      edge = extract_edge_map(image);
    }

    Tape tape;
    ParamBinder bind(tape, store);
    ModelOutputs out = model_forward(bind, tape.leaf(image), tape.leaf(edge), cfg.net);
    Value full = predict_fullres(out.saliency);
    write_saliency(full.val(), (fs::path(out_dir) / (stem + ".png")).string());
  }
  std::cout << "wrote " << images.size() << " saliency maps to " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out_csv) {
  require(fs::is_directory(pred_dir), "eval: missing predictions directory '" + pred_dir + "'");
  require(fs::is_directory(gt_dir), "eval: missing ground-truth directory '" + gt_dir + "'");
  std::map<std::string, std::string> preds, gts;
  for (const auto& e : fs::directory_iterator(pred_dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      preds[e.path().stem().string()] = e.path().string();
  for (const auto& e : fs::directory_iterator(gt_dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      gts[e.path().stem().string()] = e.path().string();

  std::string missing;
  for (const auto& [stem, _] : preds)
    if (!gts.count(stem)) missing += (missing.empty() ? "" : ", ") + stem + " (no ground truth)";
  for (const auto& [stem, _] : gts)
    if (!preds.count(stem)) missing += (missing.empty() ? "" : ", ") + stem + " (no prediction)";
  require(missing.empty(), "eval: unpaired files: " + missing);
  require(!preds.empty(), "eval: nothing to evaluate");

  MetricsAccumulator acc;
  for (const auto& [stem, path] : preds) {
    Tensor pred = read_mask(path);
    Tensor gt = read_mask(gts.at(stem));
    if (gt.h() != pred.h() || gt.w() != pred.w()) gt = nearest_resize(gt, pred.h(), pred.w());
    gt = detail::binarize(gt);
    acc.add(pred, gt);
  }
  MetricsRecord rec = acc.finalize();

  std::ofstream os(out_csv);
  if (!os.good()) throw ValidationError("eval: cannot write '" + out_csv + "'");
  write_metrics_csv(rec, os);
  std::printf("max_f %.6f\nmae %.6f\n", rec.max_f, rec.mae);
  return 0;
}

int cmd_gradcheck(const std::string& ops_csv, double tol, double eps) {
  std::vector<NamedCheck> suite = gradcheck_suite();
  if (!ops_csv.empty()) {
    std::vector<NamedCheck> filtered;
    std::stringstream ss(ops_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      bool found = false;
      for (const NamedCheck& c : suite)
        if (c.name == item) {
          filtered.push_back(c);
          found = true;
        }
      if (!found) {
        std::string names;
        for (const NamedCheck& c : suite) names += (names.empty() ? "" : ", ") + c.name;
        throw ValidationError("gradcheck: unknown op '" + item + "' (available: " + names + ")");
      }
    }
    suite = std::move(filtered);
  }

  std::printf("%-22s %-14s %8s %8s  %s\n", "op", "max_rel_err", "checked", "skipped", "status");
  std::vector<std::string> failures;
  for (const NamedCheck& c : suite) {
    GradCheckReport rep = c.fn(eps);
    const bool ok = rep.max_rel_err < tol;
    std::printf("%-22s %-14.3e %8d %8d  %s\n", rep.op.c_str(), rep.max_rel_err, rep.checked,
                rep.skipped, ok ? "ok" : "FAIL");
    if (!ok) failures.push_back(rep.op);
  }
  if (!failures.empty()) {
    std::string names;
    for (const std::string& f : failures) names += (names.empty() ? "" : ", ") + f;
    std::cerr << "gradcheck: tolerance " << tol << " exceeded by: " << names << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Edge-guided non-local FCN for salient object detection"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, checkpoint_path, images_dir, pred_dir, gt_dir,
      out_csv, ops_csv;
  int egb = -1;
  int64_t seed = -1;
  double tol = 1e-4, eps = kGradCheckEps;

  CLI::App* train_cmd = app.add_subcommand("train", "Train a model on an image/mask dataset");
  train_cmd->add_option("--config", config_path, "JSON config (defaults to the desk preset)");
  train_cmd->add_option("--data", data_dir, "Dataset root (images/ and masks/)")->required();
  train_cmd->add_option("--out", out_dir, "Output directory for checkpoints and loss.csv")
      ->required();
  train_cmd->add_option("--egb", egb, "Number of edge guidance blocks (0, 3 or 5)")
      ->check(CLI::IsMember({0, 3, 5}));
  train_cmd->add_option("--seed", seed, "Random seed override");

  CLI::App* predict_cmd = app.add_subcommand("predict", "Write saliency maps for a directory of images");
  predict_cmd->add_option("--config", config_path, "JSON config (defaults to the desk preset)");
  predict_cmd->add_option("--checkpoint", checkpoint_path, "Trained checkpoint")->required();
  predict_cmd->add_option("--images", images_dir, "Directory of input PNGs")->required();
  predict_cmd->add_option("--out", out_dir, "Output directory")->required();
  predict_cmd->add_option("--egb", egb, "Number of edge guidance blocks (0, 3 or 5)")
      ->check(CLI::IsMember({0, 3, 5}));

  CLI::App* eval_cmd = app.add_subcommand("eval", "Score predictions against ground-truth masks");
  eval_cmd->add_option("--pred", pred_dir, "Directory of predicted saliency PNGs")->required();
  eval_cmd->add_option("--gt", gt_dir, "Directory of ground-truth mask PNGs")->required();
  eval_cmd->add_option("--out", out_csv, "Metrics CSV path")->required();

  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "Check tape gradients against central differences");
  gradcheck_cmd->add_option("--ops", ops_csv, "Comma-separated op names (default: all)");
  gradcheck_cmd->add_option("--tol", tol, "Max acceptable relative error");
  gradcheck_cmd->add_option("--eps", eps, "Finite-difference step");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config_path, data_dir, out_dir, egb, seed);
    if (*predict_cmd) return cmd_predict(config_path, checkpoint_path, images_dir, out_dir, egb);
    if (*eval_cmd) return cmd_eval(pred_dir, gt_dir, out_csv);
    if (*gradcheck_cmd) return cmd_gradcheck(ops_csv, tol, eps);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
