#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "enfnet/config.hpp"
#include "enfnet/edge_guidance.hpp"
#include "enfnet/image_png.hpp"
#include "enfnet/kernels.hpp"
#include "enfnet/tensor.hpp"

namespace enfnet {

struct ManifestEntry {
  std::string stem;
  std::string image_path;
  std::string mask_path;
  std::string edge_path;  // empty when no precomputed edge map exists
};

struct DatasetManifest {
  std::string root;
  std::vector<ManifestEntry> entries;
};

constexpr const char* kEdgeSuffix = ".edge";

/// Pairs root/images/*.png with root/masks/*.png by file stem, in
/// lexicographic order. A stem missing on either side is an error listing the
/// offenders. Optional stem.edge.png files next to the images are picked up.
inline DatasetManifest load_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  const fs::path images_dir = fs::path(root) / "images";
  const fs::path masks_dir = fs::path(root) / "masks";
  require(fs::is_directory(images_dir), "dataset: missing images directory '" + images_dir.string() + "'");
  require(fs::is_directory(masks_dir), "dataset: missing masks directory '" + masks_dir.string() + "'");

  std::map<std::string, std::string> images, masks, edges;
  for (const auto& e : fs::directory_iterator(images_dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".png") continue;
    std::string stem = e.path().stem().string();
    if (stem.size() > 5 && stem.ends_with(kEdgeSuffix))
      edges[stem.substr(0, stem.size() - 5)] = e.path().string();
    else
      images[stem] = e.path().string();
  }
  for (const auto& e : fs::directory_iterator(masks_dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".png") continue;
    masks[e.path().stem().string()] = e.path().string();
  }

  std::string missing;
  for (const auto& [stem, _] : images)
    if (!masks.count(stem)) missing += (missing.empty() ? "" : ", ") + stem + " (no mask)";
  for (const auto& [stem, _] : masks)
    if (!images.count(stem)) missing += (missing.empty() ? "" : ", ") + stem + " (no image)";
  require(missing.empty(), "dataset: unpaired files under '" + root + "': " + missing);
  require(!images.empty(), "dataset: no image/mask pairs under '" + root + "'");

  DatasetManifest m;
  m.root = root;
  for (const auto& [stem, path] : images) {
    ManifestEntry entry;
    entry.stem = stem;
    entry.image_path = path;
    entry.mask_path = masks.at(stem);
    if (auto it = edges.find(stem); it != edges.end()) entry.edge_path = it->second;
    m.entries.push_back(std::move(entry));
  }
  return m;
}

/// One training element: normalized image, binary mask at the supervision
/// resolution, and the [0,1] edge map at the level-1 resolution.
struct Sample {
  Tensor image;  // [1,3,S,S] in [0,1]
  Tensor gt;     // [1,1,S/2,S/2] (or S x S when supervising at full size), values in {0,1}
  Tensor edge;   // [1,1,S/2,S/2] in [0,1]
  std::string id;
};

namespace detail {
inline Tensor to_gray(const Tensor& t) {
  if (t.c() == 1) return t;
  Tensor g(t.n(), 1, t.h(), t.w());
  for (int n = 0; n < t.n(); ++n)
    for (int y = 0; y < t.h(); ++y)
      for (int x = 0; x < t.w(); ++x) {
        double acc = 0.0;
        for (int c = 0; c < t.c(); ++c) acc += t.at(n, c, y, x);
        g.at(n, 0, y, x) = acc / t.c();
      }
  return g;
}

inline Tensor to_rgb(const Tensor& t) {
  if (t.c() == 3) return t;
  require(t.c() == 1, "expected 1 or 3 channel image, got " + std::to_string(t.c()));
  Tensor rgb(t.n(), 3, t.h(), t.w());
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x) rgb.at(n, c, y, x) = t.at(n, 0, y, x);
  return rgb;
}

inline Tensor binarize(const Tensor& t, double threshold = 0.5) {
  Tensor out(t.n(), t.c(), t.h(), t.w());
  for (int64_t i = 0; i < t.numel(); ++i) out[i] = t[i] >= threshold ? 1.0 : 0.0;
  return out;
}
}  // namespace detail

inline Tensor load_mask_binary(const std::string& path, int size) {
  Tensor mask = detail::to_gray(read_png(path));
  return detail::binarize(nearest_resize(mask, size, size));
}

inline Sample prepare_sample(const ManifestEntry& entry, const NetworkConfig& cfg) {
  const int s = cfg.input_size;
  Sample out;
  out.id = entry.stem;
  out.image = bilinear_resize_fwd(detail::to_rgb(read_png(entry.image_path)), s, s);
  for (int64_t i = 0; i < out.image.numel(); ++i) out.image[i] = std::clamp(out.image[i], 0.0, 1.0);

  const int gt_size = cfg.supervise_fullres ? s : s / 2;
  out.gt = load_mask_binary(entry.mask_path, gt_size);

  if (!entry.edge_path.empty()) {
    Tensor e = bilinear_resize_fwd(detail::to_gray(read_png(entry.edge_path)), s / 2, s / 2);
    for (int64_t i = 0; i < e.numel(); ++i) e[i] = std::clamp(e[i], 0.0, 1.0);
    out.edge = std::move(e);
  } else {
    out.edge = extract_edge_map(out.image);
  }
  return out;
}

inline Sample hflip_augment(const Sample& s) {
  Sample out;
  out.image = hflip(s.image);
  out.gt = hflip(s.gt);
  out.edge = hflip(s.edge);
  out.id = s.id + "_flip";
  return out;
}

inline void write_saliency(const Tensor& map, const std::string& path) {
  write_png_gray(map, path);
}

inline Tensor read_mask(const std::string& path) { return detail::to_gray(read_png(path)); }

}  // namespace enfnet
