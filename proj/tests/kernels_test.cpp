#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "enfnet/kernels.hpp"

using namespace enfnet;

namespace {

Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(n, c, h, w);
  fill_uniform(t, rng, lo, hi);
  return t;
}

// Independent triple-nested-loop convolution used as the ground truth for the
// optimized kernel. Accumulates over (ci, ky, kx) per output element.
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int sh, int sw, int ph,
                    int pw) {
  const int oh = conv_out_size(x.h(), w.h(), sh, ph);
  const int ow = conv_out_size(x.w(), w.w(), sw, pw);
  Tensor out(x.n(), w.n(), oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int co = 0; co < w.n(); ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int ci = 0; ci < x.c(); ++ci)
            for (int ky = 0; ky < w.h(); ++ky)
              for (int kx = 0; kx < w.w(); ++kx) {
                const int iy = oy * sh - ph + ky;
                const int ix = ox * sw - pw + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += w.at(co, ci, ky, kx) * x.at(n, ci, iy, ix);
              }
          out.at(n, co, oy, ox) = acc + bias[co];
        }
  return out;
}

double dot_all(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

TEST(TensorTest, ShapeAndDataLength) {
  Tensor t(2, 3, 4, 5);
  EXPECT_EQ(t.numel(), 120);
  EXPECT_EQ(t.n(), 2);
  EXPECT_EQ(t.w(), 5);
  t.at(1, 2, 3, 4) = 7.0;
  EXPECT_EQ(t[119], 7.0);
  EXPECT_THROW(Tensor(-1, 1, 1, 1), ValidationError);
}

TEST(ConvSpecTest, SameResolvesToHalfKernel) {
  EXPECT_EQ(ConvSpec::same(3).padding(), (std::pair<int, int>{1, 1}));
  EXPECT_EQ(ConvSpec::same(5).padding(), (std::pair<int, int>{2, 2}));
  ConvSpec even = ConvSpec::same(4);
  EXPECT_THROW(even.padding(), ValidationError);
  ConvSpec bad_op = ConvSpec::explicit_pad(5, 2, 2, 2);
  EXPECT_THROW(bad_op.validate(), ValidationError);
}

TEST(Conv2dTest, MatchesNaiveOracleValidPadding) {
  std::mt19937_64 rng(42);
  Tensor x = random_tensor(1, 1, 4, 4, rng);
  Tensor w = random_tensor(1, 1, 3, 3, rng);
  Tensor b(1, 1, 1, 1);
  Tensor got = conv2d_fwd(x, w, b, ConvSpec::valid(3));
  Tensor want = naive_conv2d(x, w, b, 1, 1, 0, 0);
  ASSERT_EQ(got.shape(), want.shape());
  for (int64_t i = 0; i < got.numel(); ++i) EXPECT_DOUBLE_EQ(got[i], want[i]);
}

TEST(Conv2dTest, MatchesNaiveOracleAcrossSpecs) {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 30; ++iter) {
    std::uniform_int_distribution<int> kd(0, 2), sd(1, 3), cd(1, 4), hd(5, 9);
    const int k = 2 * kd(rng) + 1;
    ConvSpec spec = ConvSpec::explicit_pad(k, sd(rng), std::uniform_int_distribution<int>(0, k / 2)(rng));
    spec.sw = sd(rng);
    const int h = hd(rng), w_in = hd(rng);
    if (h + 2 * spec.ph < k || w_in + 2 * spec.pw < k) continue;
    Tensor x = random_tensor(1, cd(rng), h, w_in, rng);
    Tensor wt = random_tensor(cd(rng), x.c(), k, k, rng);
    Tensor b = random_tensor(1, wt.n(), 1, 1, rng);
    Tensor got = conv2d_fwd(x, wt, b, spec);
    Tensor want = naive_conv2d(x, wt, b, spec.sh, spec.sw, spec.ph, spec.pw);
    ASSERT_EQ(got.shape(), want.shape());
    for (int64_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv2dTest, OutputShapeFollowsClosedForm) {
  std::mt19937_64 rng(3);
  for (int iter = 0; iter < 50; ++iter) {
    std::uniform_int_distribution<int> kd(0, 2), sd(1, 3), hd(6, 20);
    const int k = 2 * kd(rng) + 1;
    ConvSpec spec = ConvSpec::explicit_pad(k, sd(rng), std::uniform_int_distribution<int>(0, k / 2)(rng));
    Tensor x = random_tensor(1, 2, hd(rng), hd(rng), rng);
    if (x.h() + 2 * spec.ph < k || x.w() + 2 * spec.pw < k) continue;
    Tensor w = random_tensor(3, 2, k, k, rng);
    Tensor b(1, 3, 1, 1);
    Tensor out = conv2d_fwd(x, w, b, spec);
    EXPECT_EQ(out.h(), (x.h() + 2 * spec.ph - k) / spec.sh + 1);
    EXPECT_EQ(out.w(), (x.w() + 2 * spec.pw - k) / spec.sw + 1);
  }
}

TEST(Conv2dTest, OneByOneIdentityKernel) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor(1, 3, 6, 6, rng);
  Tensor w(3, 3, 1, 1);
  for (int c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 1.0;
  Tensor b(1, 3, 1, 1);
  Tensor out = conv2d_fwd(x, w, b, ConvSpec::valid(1));
  for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(out[i], x[i]);
}

TEST(Conv2dTest, RejectsChannelMismatchNamingDimension) {
  Tensor x(1, 4, 8, 8);
  Tensor w(2, 3, 3, 3);
  Tensor b(1, 2, 1, 1);
  try {
    conv2d_fwd(x, w, b, ConvSpec::same(3));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("4"), std::string::npos);
  }
}

TEST(Conv2dTest, RejectsKernelLargerThanPaddedInput) {
  Tensor x(1, 1, 2, 2);
  Tensor w(1, 1, 5, 5);
  Tensor b(1, 1, 1, 1);
  EXPECT_THROW(conv2d_fwd(x, w, b, ConvSpec::valid(5)), ValidationError);
}

TEST(ConvTransposeTest, IdentityChannelMatrix) {
  std::mt19937_64 rng(11);
  Tensor x = random_tensor(1, 2, 5, 5, rng);
  Tensor w(2, 2, 1, 1);
  w.at(0, 0, 0, 0) = 1.0;
  w.at(1, 1, 0, 0) = 1.0;
  Tensor b(1, 2, 1, 1);
  Tensor out = conv2d_transpose_fwd(x, w, b, ConvSpec::explicit_pad(1, 1, 0, 0));
  ASSERT_EQ(out.shape(), x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(out[i], x[i]);
}

TEST(ConvTransposeTest, StrideTwoDoublesEleven) {
  // 11 -> 22 with k=5, s=2, p=2, output_padding=1
  Tensor x(1, 8, 11, 11);
  Tensor w(8, 4, 5, 5);
  Tensor b(1, 4, 1, 1);
  Tensor out = conv2d_transpose_fwd(x, w, b, ConvSpec::explicit_pad(5, 2, 2, 1));
  EXPECT_EQ(out.h(), 22);
  EXPECT_EQ(out.w(), 22);
  EXPECT_EQ(out.c(), 4);
}

TEST(ConvTransposeTest, RejectsNonPositiveOutput) {
  Tensor x(1, 1, 1, 1);
  Tensor w(1, 1, 1, 1);
  Tensor b(1, 1, 1, 1);
  EXPECT_THROW(conv2d_transpose_fwd(x, w, b, ConvSpec::explicit_pad(1, 1, 1, 0)), ValidationError);
}

TEST(ConvTransposeTest, ExactAdjointOfConv2d) {
  std::mt19937_64 rng(13);
  for (int iter = 0; iter < 20; ++iter) {
    std::uniform_int_distribution<int> kd(0, 2), sd(1, 3), cdist(1, 3), od(2, 5);
    const int k = 2 * kd(rng) + 1;
    const int s = sd(rng);
    const int p = std::uniform_int_distribution<int>(0, k / 2)(rng);
    const int op = std::uniform_int_distribution<int>(0, s - 1)(rng);
    ConvSpec spec = ConvSpec::explicit_pad(k, s, p, op);
    const int oh = od(rng), ow = od(rng);
    const int h = conv_transpose_out_size(oh, k, s, p, op);
    const int w_in = conv_transpose_out_size(ow, k, s, p, op);
    if (h < 1 || w_in < 1) continue;
    const int cin = cdist(rng), cout = cdist(rng);
    Tensor x = random_tensor(1, cin, h, w_in, rng);
    Tensor wt = random_tensor(cout, cin, k, k, rng);
    Tensor zero_b_out(1, cout, 1, 1), zero_b_in(1, cin, 1, 1);
    Tensor y = random_tensor(1, cout, oh, ow, rng);

    Tensor cx = conv2d_fwd(x, wt, zero_b_out, spec);
    ASSERT_EQ(cx.shape(), y.shape());
    Tensor ty = conv2d_transpose_fwd(y, wt, zero_b_in, spec);
    ASSERT_EQ(ty.shape(), x.shape());
    EXPECT_NEAR(dot_all(cx, y), dot_all(x, ty), 1e-10);
  }
}

TEST(MaxPoolTest, HalvesSpatialSize) {
  Tensor x(1, 4, 32, 32);
  Tensor out = max_pool2d_fwd(x);
  EXPECT_EQ(out.h(), 16);
  EXPECT_EQ(out.w(), 16);
  EXPECT_THROW(max_pool2d_fwd(Tensor(1, 1, 5, 4)), ValidationError);
}

TEST(MaxPoolTest, ConstantInputMapsToConstant) {
  Tensor x(1, 2, 6, 6);
  x.fill(3.25);
  Tensor out = max_pool2d_fwd(x);
  for (int64_t i = 0; i < out.numel(); ++i) EXPECT_EQ(out[i], 3.25);
}

TEST(MaxPoolTest, MatchesWindowScanOracle) {
  std::mt19937_64 rng(17);
  Tensor x = random_tensor(1, 1, 4, 4, rng);
  Tensor out = max_pool2d_fwd(x);
  for (int oy = 0; oy < 2; ++oy)
    for (int ox = 0; ox < 2; ++ox) {
      double m = -1e300;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) m = std::max(m, x.at(0, 0, 2 * oy + dy, 2 * ox + dx));
      EXPECT_EQ(out.at(0, 0, oy, ox), m);
    }
}

TEST(MaxPoolTest, BackwardRoutesToFirstArgmaxOnTies) {
  Tensor x(1, 1, 2, 2);
  x.fill(5.0);  // four-way tie
  Tensor gout(1, 1, 1, 1);
  gout[0] = 2.0;
  Tensor gin(1, 1, 2, 2);
  max_pool2d_bwd_acc(gout, x, gin);
  EXPECT_EQ(gin.at(0, 0, 0, 0), 2.0);
  EXPECT_EQ(gin.at(0, 0, 0, 1), 0.0);
  EXPECT_EQ(gin.at(0, 0, 1, 0), 0.0);
  EXPECT_EQ(gin.at(0, 0, 1, 1), 0.0);
}

TEST(AvgPoolTest, ConstantPreservedExactlyIncludingBorders) {
  Tensor x(1, 2, 5, 7);
  x.fill(0.1);  // not exactly representable; exercises the compensated mean
  Tensor out = avg_pool2d_same_fwd(x);
  for (int64_t i = 0; i < out.numel(); ++i) EXPECT_EQ(out[i], 0.1);
}

TEST(AvgPoolTest, ShapePreserved) {
  Tensor x(1, 3, 12, 9);
  EXPECT_EQ(avg_pool2d_same_fwd(x).shape(), x.shape());
}

TEST(AvgPoolTest, CenterEqualsMeanOfNine) {
  std::mt19937_64 rng(19);
  Tensor x = random_tensor(1, 1, 3, 3, rng);
  Tensor out = avg_pool2d_same_fwd(x);
  double mean = 0.0;
  for (int64_t i = 0; i < 9; ++i) mean += x[i];
  mean /= 9.0;
  EXPECT_NEAR(out.at(0, 0, 1, 1), mean, 1e-14);
}

TEST(AvgPoolTest, CornerDividesByInBoundsCount) {
  Tensor x(1, 1, 3, 3);
  x.at(0, 0, 0, 0) = 4.0;
  Tensor out = avg_pool2d_same_fwd(x);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0, 0), 1.0);  // 4 / (2x2 window)
}

TEST(BilinearTest, FactorOneIsIdentity) {
  std::mt19937_64 rng(23);
  Tensor x = random_tensor(1, 2, 5, 5, rng);
  Tensor out = bilinear_resize_fwd(x, 5, 5);
  for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(out[i], x[i]);
}

TEST(BilinearTest, DoublesPaperGeometry) {
  Tensor x(1, 2, 176, 176);
  Tensor out = bilinear_resize_fwd(x, 352, 352);
  EXPECT_EQ(out.h(), 352);
  EXPECT_EQ(out.w(), 352);
}

TEST(BilinearTest, ConstantMapsToConstantExactly) {
  Tensor x(1, 1, 4, 6);
  x.fill(0.3);
  for (int f : {2, 3, 5}) {
    Tensor out = bilinear_resize_fwd(x, 4 * f, 6 * f);
    for (int64_t i = 0; i < out.numel(); ++i) EXPECT_EQ(out[i], 0.3);
  }
}

TEST(BilinearTest, StaysInsideInputRange) {
  std::mt19937_64 rng(29);
  Tensor x = random_tensor(1, 1, 6, 6, rng, 0.0, 1.0);
  Tensor out = bilinear_resize_fwd(x, 13, 9);
  EXPECT_GE(out.min(), x.min());
  EXPECT_LE(out.max(), x.max());
}

TEST(ConcatTest, ChannelCountsAddUp) {
  Tensor a(1, 4, 6, 6), b(1, 4, 6, 6), c(1, 4, 6, 6);
  Tensor out = concat_channels_fwd({&a, &b, &c});
  EXPECT_EQ(out.c(), 12);
  Tensor single = concat_channels_fwd({&a});
  EXPECT_EQ(single.shape(), a.shape());
}

TEST(ConcatTest, SliceRecoversPartsExactly) {
  std::mt19937_64 rng(31);
  Tensor a = random_tensor(1, 2, 4, 4, rng);
  Tensor b = random_tensor(1, 3, 4, 4, rng);
  Tensor cat = concat_channels_fwd({&a, &b});
  Tensor sa = slice_channels_fwd(cat, 0, 2);
  Tensor sb = slice_channels_fwd(cat, 2, 3);
  for (int64_t i = 0; i < a.numel(); ++i) EXPECT_EQ(sa[i], a[i]);
  for (int64_t i = 0; i < b.numel(); ++i) EXPECT_EQ(sb[i], b[i]);
}

TEST(ConcatTest, RejectsSpatialMismatchNamingPart) {
  Tensor a(1, 2, 4, 4), b(1, 2, 5, 4);
  try {
    concat_channels_fwd({&a, &b});
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("part 1"), std::string::npos);
  }
}

TEST(EltwiseTest, IdentityElements) {
  std::mt19937_64 rng(37);
  Tensor x = random_tensor(1, 2, 3, 3, rng);
  Tensor ones(1, 2, 3, 3);
  ones.fill(1.0);
  Tensor zeros(1, 2, 3, 3);
  Tensor mul = eltwise_mul_fwd(x, ones);
  Tensor add = axpby_fwd(x, zeros, 1.0, 1.0);
  for (int64_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(mul[i], x[i]);
    EXPECT_EQ(add[i], x[i]);
  }
  EXPECT_THROW(eltwise_mul_fwd(x, Tensor(1, 2, 3, 4)), ValidationError);
}

TEST(EltwiseTest, MulMatchesPointwiseOracle) {
  std::mt19937_64 rng(41);
  Tensor a = random_tensor(1, 1, 2, 2, rng);
  Tensor b = random_tensor(1, 1, 2, 2, rng);
  Tensor out = eltwise_mul_fwd(a, b);
  for (int64_t i = 0; i < 4; ++i) EXPECT_EQ(out[i], a[i] * b[i]);
}

TEST(ActivationTest, ReluAndTanhRanges) {
  std::mt19937_64 rng(43);
  Tensor x = random_tensor(1, 2, 4, 4, rng, -5.0, 5.0);
  Tensor r = relu_fwd(x);
  Tensor th = tanh_fwd(x);
  for (int64_t i = 0; i < x.numel(); ++i) {
    EXPECT_GE(r[i], 0.0);
    EXPECT_GT(th[i], -1.0);
    EXPECT_LT(th[i], 1.0);
  }
  Tensor zero(1, 1, 1, 1);
  EXPECT_EQ(tanh_fwd(zero)[0], 0.0);
}

TEST(SoftmaxTest, EqualLogitsGiveHalf) {
  Tensor z(1, 2, 3, 3);
  z.fill(0.7);
  Tensor p = pixel_softmax2_fwd(z);
  for (int64_t i = 0; i < p.numel(); ++i) EXPECT_DOUBLE_EQ(p[i], 0.5);
}

TEST(SoftmaxTest, KnownLogitPair) {
  Tensor z(1, 2, 1, 1);
  z.at(0, 0, 0, 0) = 1.0;
  z.at(0, 1, 0, 0) = 0.0;
  Tensor p = pixel_softmax2_fwd(z);
  EXPECT_NEAR(p.at(0, 0, 0, 0), 0.7310585786300049, 1e-15);
  EXPECT_NEAR(p.at(0, 1, 0, 0), 0.2689414213699951, 1e-15);
}

TEST(SoftmaxTest, LargeLogitsStayFinite) {
  Tensor z(1, 2, 1, 1);
  z.at(0, 0, 0, 0) = 1000.0;
  z.at(0, 1, 0, 0) = 0.0;
  Tensor p = pixel_softmax2_fwd(z);
  // exact values to double precision: 1/(1+e^-1000) rounds to 1, the tail to 0
  EXPECT_EQ(p.at(0, 0, 0, 0), 1.0);
  EXPECT_EQ(p.at(0, 1, 0, 0), 0.0);
  EXPECT_TRUE(p.all_finite());
}

TEST(SoftmaxTest, ChannelsSumToOne) {
  std::mt19937_64 rng(47);
  Tensor z = random_tensor(2, 2, 5, 5, rng, -30.0, 30.0);
  Tensor p = pixel_softmax2_fwd(z);
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x)
        EXPECT_NEAR(p.at(n, 0, y, x) + p.at(n, 1, y, x), 1.0, 1e-12);
  EXPECT_THROW(pixel_softmax2_fwd(Tensor(1, 3, 2, 2)), ValidationError);
}

TEST(BoundaryTest, ConstantInputGivesExactZero) {
  Tensor x(1, 1, 6, 6);
  x.fill(0.77);
  Tensor b = boundary_response_fwd(x);
  for (int64_t i = 0; i < b.numel(); ++i) EXPECT_EQ(b[i], 0.0);
}

TEST(BoundaryTest, VerticalStepActivatesFlankingColumns) {
  // left half 0, right half 1; Sobel column response is +/-4 at the step
  Tensor x(1, 1, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int xx = 4; xx < 8; ++xx) x.at(0, 0, y, xx) = 1.0;
  Tensor b = boundary_response_fwd(x);
  const double expect = std::tanh(4.0);
  for (int y = 0; y < 8; ++y) {
    EXPECT_NEAR(b.at(0, 0, y, 3), expect, 2e-6);
    EXPECT_NEAR(b.at(0, 0, y, 4), expect, 2e-6);
    for (int xx : {0, 1, 2, 5, 6, 7}) EXPECT_NEAR(b.at(0, 0, y, xx), 0.0, 1e-12);
  }
}

TEST(BoundaryTest, ValuesStrictlyBelowOne) {
  std::mt19937_64 rng(53);
  Tensor x = random_tensor(1, 1, 6, 6, rng, -100.0, 100.0);
  Tensor b = boundary_response_fwd(x);
  for (int64_t i = 0; i < b.numel(); ++i) {
    EXPECT_GE(b[i], 0.0);
    EXPECT_LT(b[i], 1.0);
  }
}

TEST(ResampleTest, AreaDownsampleAveragesBlocks) {
  Tensor x(1, 1, 4, 4);
  for (int64_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i);
  Tensor d = area_downsample2(x);
  EXPECT_DOUBLE_EQ(d.at(0, 0, 0, 0), (0 + 1 + 4 + 5) / 4.0);
  EXPECT_DOUBLE_EQ(d.at(0, 0, 1, 1), (10 + 11 + 14 + 15) / 4.0);
}

TEST(ResampleTest, HflipIsInvolution) {
  std::mt19937_64 rng(59);
  Tensor x = random_tensor(1, 3, 4, 5, rng);
  Tensor ff = hflip(hflip(x));
  for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(ff[i], x[i]);
  Tensor impulse(1, 1, 1, 5);
  impulse.at(0, 0, 0, 0) = 1.0;
  EXPECT_EQ(hflip(impulse).at(0, 0, 0, 4), 1.0);
}

TEST(FinitenessTest, RandomPipelineStaysFinite) {
  std::mt19937_64 rng(61);
  Tensor x = random_tensor(1, 4, 8, 8, rng, -10.0, 10.0);
  Tensor w = random_tensor(6, 4, 3, 3, rng);
  Tensor b = random_tensor(1, 6, 1, 1, rng);
  Tensor y = conv2d_fwd(x, w, b, ConvSpec::same(3));
  y = relu_fwd(y);
  y = max_pool2d_fwd(y);
  y = avg_pool2d_same_fwd(y);
  y = bilinear_resize_fwd(y, 8, 8);
  EXPECT_TRUE(y.all_finite());
}
