#include <gtest/gtest.h>

#include <png.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "enfnet/checkpoint.hpp"
#include "enfnet/data_io.hpp"
#include "enfnet/model.hpp"
#include "test_fixtures.hpp"

using namespace enfnet;
namespace fs = std::filesystem;

namespace {

void write_rgb_png(const Tensor& img, const std::string& path) {
  const int h = img.h(), w = img.w();
  std::vector<uint8_t> buffer(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        buffer[(static_cast<size_t>(y) * w + x) * 3 + c] =
            static_cast<uint8_t>(std::lround(255.0 * img.at(0, c, y, x)));
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  ASSERT_TRUE(png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr));
}

}  // namespace

TEST(PngTest, GrayRoundTripWithinQuantization) {
  std::string dir = testfix::scratch_dir("png_roundtrip");
  std::mt19937_64 rng(3);
  Tensor map(1, 1, 9, 7);
  fill_uniform(map, rng, 0.0, 1.0);
  const std::string path = dir + "/map.png";
  write_saliency(map, path);
  Tensor back = read_mask(path);
  ASSERT_EQ(back.shape(), map.shape());
  for (int64_t i = 0; i < map.numel(); ++i) EXPECT_NEAR(back[i], map[i], 1.0 / 510.0);
}

TEST(PngTest, QuantizationEndpointsAndMidGray) {
  std::string dir = testfix::scratch_dir("png_quant");
  Tensor map(1, 1, 1, 3);
  map[0] = 0.0;
  map[1] = 0.5;
  map[2] = 1.0;
  write_saliency(map, dir + "/q.png");
  Tensor back = read_mask(dir + "/q.png");
  EXPECT_EQ(back[0], 0.0);
  EXPECT_DOUBLE_EQ(back[1], 128.0 / 255.0);  // round(127.5) == 128
  EXPECT_EQ(back[2], 1.0);
}

TEST(PngTest, RgbFilesDecodeToThreeChannels) {
  std::string dir = testfix::scratch_dir("png_rgb");
  Tensor img = testfix::square_image(16);
  write_rgb_png(img, dir + "/rgb.png");
  Tensor back = read_png(dir + "/rgb.png");
  EXPECT_EQ(back.c(), 3);
  EXPECT_EQ(back.h(), 16);
  for (int64_t i = 0; i < back.numel(); ++i) EXPECT_NEAR(back[i], img[i], 1.0 / 510.0 + 1e-12);
}

TEST(PngTest, UnreadableFileSurfacesPath) {
  try {
    read_png("/nonexistent/nowhere.png");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("nowhere.png"), std::string::npos);
  }
}

TEST(ManifestTest, PairsByStemSorted) {
  std::string root = testfix::write_square_dataset("manifest_sorted", 3, 32);
  DatasetManifest m = load_dataset(root);
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.entries[0].stem, "sample0");
  EXPECT_EQ(m.entries[2].stem, "sample2");
  EXPECT_TRUE(m.entries[0].edge_path.empty());
}

TEST(ManifestTest, UnpairedImageNamesTheStem) {
  std::string root = testfix::write_square_dataset("manifest_unpaired", 2, 32);
  fs::remove(fs::path(root) / "masks" / "sample1.png");
  try {
    load_dataset(root);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("sample1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("no mask"), std::string::npos);
  }
}

TEST(ManifestTest, MissingDirectoriesNamed) {
  std::string dir = testfix::scratch_dir("manifest_missing");
  try {
    load_dataset(dir);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("images"), std::string::npos);
  }
}

TEST(ManifestTest, PrecomputedEdgeMapsPickedUp) {
  std::string root = testfix::write_square_dataset("manifest_edge", 2, 32);
  Tensor edge(1, 1, 32, 32);
  edge.fill(0.5);
  write_png_gray(edge, (fs::path(root) / "images" / "sample0.edge.png").string());
  DatasetManifest m = load_dataset(root);
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_FALSE(m.entries[0].edge_path.empty());
  EXPECT_TRUE(m.entries[1].edge_path.empty());

  NetworkConfig cfg = testfix::tiny_config().net;
  Sample s = prepare_sample(m.entries[0], cfg);
  EXPECT_EQ(s.edge.h(), 16);
  for (int64_t i = 0; i < s.edge.numel(); ++i)
    EXPECT_NEAR(s.edge[i], 128.0 / 255.0, 1e-12);  // loaded, not recomputed
}

TEST(PrepareSampleTest, ResizesAndBinarizes) {
  std::string root = testfix::scratch_dir("prepare_odd");
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "masks");
  Tensor img = testfix::square_image(40);  // non-conforming source size
  write_rgb_png(img, (fs::path(root) / "images" / "a.png").string());
  write_png_gray(testfix::square_mask(40), (fs::path(root) / "masks" / "a.png").string());

  NetworkConfig cfg = testfix::tiny_config().net;  // input 32
  DatasetManifest m = load_dataset(root);
  Sample s = prepare_sample(m.entries[0], cfg);
  EXPECT_EQ(s.image.h(), 32);
  EXPECT_EQ(s.image.c(), 3);
  EXPECT_GE(s.image.min(), 0.0);
  EXPECT_LE(s.image.max(), 1.0);
  EXPECT_EQ(s.gt.h(), 16);
  for (int64_t i = 0; i < s.gt.numel(); ++i) EXPECT_TRUE(s.gt[i] == 0.0 || s.gt[i] == 1.0);
  EXPECT_EQ(s.edge.h(), 16);
  EXPECT_EQ(s.id, "a");
}

TEST(PrepareSampleTest, FullResSupervisionSize) {
  std::string root = testfix::write_square_dataset("prepare_fullres", 1, 32);
  NetworkConfig cfg = testfix::tiny_config().net;
  cfg.supervise_fullres = true;
  Sample s = prepare_sample(load_dataset(root).entries[0], cfg);
  EXPECT_EQ(s.gt.h(), 32);
}

TEST(AugmentTest, FlipIsInvolutionAndMirrorsAllFields) {
  std::string root = testfix::write_square_dataset("augment", 1, 32);
  NetworkConfig cfg = testfix::tiny_config().net;
  Sample s = prepare_sample(load_dataset(root).entries[0], cfg);
  Sample f = hflip_augment(s);
  Sample ff = hflip_augment(f);
  for (int64_t i = 0; i < s.image.numel(); ++i) ASSERT_EQ(ff.image[i], s.image[i]);
  for (int64_t i = 0; i < s.gt.numel(); ++i) ASSERT_EQ(ff.gt[i], s.gt[i]);
  for (int64_t i = 0; i < s.edge.numel(); ++i) ASSERT_EQ(ff.edge[i], s.edge[i]);
  EXPECT_EQ(f.image.at(0, 0, 5, 0), s.image.at(0, 0, 5, 31));
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  std::string dir = testfix::scratch_dir("ckpt_roundtrip");
  NetworkConfig cfg = testfix::tiny_config().net;
  ParamStore store;
  build_model_params(store, cfg, 101);
  const std::string path = dir + "/model.ckpt";
  save_checkpoint(store, path);

  ParamStore fresh;
  build_model_params(fresh, cfg, 999);  // different values, same shapes
  adopt_checkpoint(fresh, load_checkpoint(path), path);
  for (size_t i = 0; i < store.size(); ++i) {
    const Tensor& a = store.items()[i].value;
    const Tensor& b = fresh.items()[i].value;
    for (int64_t j = 0; j < a.numel(); ++j) ASSERT_EQ(a[j], b[j]);
  }
}

TEST(CheckpointTest, TruncatedFileRejectedWithoutPartialLoad) {
  std::string dir = testfix::scratch_dir("ckpt_truncated");
  NetworkConfig cfg = testfix::tiny_config().net;
  ParamStore store;
  build_model_params(store, cfg, 103);
  const std::string path = dir + "/model.ckpt";
  save_checkpoint(store, path);
  const auto size = fs::file_size(path);
  fs::resize_file(path, size / 2);
  EXPECT_THROW(load_checkpoint(path), ValidationError);

  std::ofstream bad(dir + "/bad.ckpt", std::ios::binary);
  bad << "NOPE";
  bad.close();
  EXPECT_THROW(load_checkpoint(dir + "/bad.ckpt"), ValidationError);
}

TEST(CheckpointTest, GeometryMismatchNamesShapes) {
  std::string dir = testfix::scratch_dir("ckpt_geometry");
  ParamStore wide;
  build_model_params(wide, testfix::tiny_config(6).net, 107);
  const std::string path = dir + "/wide.ckpt";
  save_checkpoint(wide, path);

  ParamStore narrow;
  build_model_params(narrow, testfix::tiny_config(4).net, 107);
  try {
    adopt_checkpoint(narrow, load_checkpoint(path), path);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos);
  }
}
