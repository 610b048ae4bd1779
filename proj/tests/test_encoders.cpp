#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "radm/encoders.hpp"

using namespace radm;

namespace {

FeaturePyramid<double> rampPyramid(int levels, int w0, int h0, int C) {
  FeaturePyramid<double> p;
  int w = w0, h = h0;
  for (int l = 0; l < levels; ++l) {
    FeatureLevel<double> lvl;
    lvl.stride = 1 << l;
    lvl.width = w;
    lvl.height = h;
    lvl.map.resize(C, w * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) lvl.map.col(y * w + x).setConstant(1.0 + (x + 0.5) / w);
    p.levels.push_back(std::move(lvl));
    w /= 2;
    h /= 2;
  }
  return p;
}

double poolMean(const RoIFeature<double>& r) { return r.data.mean(); }

}  // namespace

TEST(ImageEncoder, ZeroImageFinite) {
  const ModelConfig cfg = deskConfig();
  Rng rng(1);
  const ImageEncoder<double> enc(cfg, rng);
  const auto pyr = enc.forward(prepareStem<double>(Raster(40, 60, 3, 0.f), cfg));
  ASSERT_EQ(static_cast<int>(pyr.levels.size()), cfg.pyramid_levels);
  for (std::size_t l = 0; l < pyr.levels.size(); ++l) {
    EXPECT_TRUE(pyr.levels[l].map.allFinite());
    EXPECT_EQ(pyr.levels[l].map.rows(), cfg.C);
    if (l > 0) EXPECT_GT(pyr.levels[l].stride, pyr.levels[l - 1].stride);
  }
}

TEST(ImageEncoder, Deterministic) {
  const ModelConfig cfg = deskConfig();
  Rng r1(4), r2(4);
  const ImageEncoder<float> a(cfg, r1), b(cfg, r2);
  Raster img(30, 50, 3);
  std::mt19937_64 g(2);
  std::uniform_real_distribution<float> u(0, 1);
  for (auto& v : img.data) v = u(g);
  const auto pa = a.forward(prepareStem<float>(img, cfg));
  const auto pb = b.forward(prepareStem<float>(img, cfg));
  for (std::size_t l = 0; l < pa.levels.size(); ++l) EXPECT_EQ(pa.levels[l].map, pb.levels[l].map);
}

TEST(ImageEncoder, TwoToneLocality) {
  const ModelConfig cfg = deskConfig();
  Rng rng(3);
  const ImageEncoder<double> enc(cfg, rng);
  Raster img(96, 150, 3, 0.f);
  for (int y = 0; y < img.height; ++y)
    for (int x = img.width / 2; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = 1.f;
  const auto pyr = enc.forward(prepareStem<double>(img, cfg));
  const auto left = roiPool(pyr, {0.2, 0.5, 0.2, 0.3}, cfg.Wr, cfg.Hr);
  const auto right = roiPool(pyr, {0.8, 0.5, 0.2, 0.3}, cfg.Wr, cfg.Hr);
  EXPECT_GT((left.data - right.data).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(ImageEncoder, RejectsEmptyOrBadChannels) {
  const ModelConfig cfg = deskConfig();
  EXPECT_THROW(prepareStem<double>(Raster(), cfg), std::invalid_argument);
  EXPECT_THROW(prepareStem<double>(Raster(4, 4, 2), cfg), std::invalid_argument);
  EXPECT_NO_THROW(prepareStem<double>(Raster(4, 4, 1), cfg));
}

TEST(RoiPool, ConstantField) {
  FeaturePyramid<double> p = rampPyramid(2, 16, 24, 3);
  for (auto& l : p.levels) l.map.setConstant(2.5);
  const auto r = roiPool(p, {0.5, 0.5, 1.0, 1.0}, 3, 3);
  EXPECT_LT((r.data.array() - 2.5).abs().maxCoeff(), 1e-12);
}

TEST(RoiPool, IdenticalBoxesIdentical) {
  std::mt19937_64 rng(9);
  FeaturePyramid<double> p = rampPyramid(3, 32, 48, 4);
  for (auto& l : p.levels) l.map = fixture::randomMat<double>(rng, 4, l.map.cols());
  const BBox b{0.4, 0.6, 0.3, 0.2};
  EXPECT_EQ(roiPool(p, b, 3, 3).data, roiPool(p, b, 3, 3).data);
}

TEST(RoiPool, HalfCanvasRampMean) {
  // Map value is 1 + u with u the normalized x of the cell center. The mean of
  // 1 + u over the left half is 1.25.
  const auto p = rampPyramid(2, 32, 48, 2);
  const auto r = roiPool(p, {0.25, 0.5, 0.5, 1.0}, 3, 3);
  EXPECT_NEAR(poolMean(r), 1.25, 0.02 * 1.25);
  const auto rr = roiPool(p, {0.75, 0.5, 0.5, 1.0}, 3, 3);
  EXPECT_NEAR(poolMean(rr), 1.75, 0.02 * 1.75);
}

TEST(RoiPool, TranslationConsistent) {
  FeaturePyramid<double> p;
  FeatureLevel<double> lvl;
  lvl.width = 40;
  lvl.height = 40;
  lvl.map = Mat<double>::Zero(1, 1600);
  p.levels = {lvl, lvl};
  auto peak = [&](int x, int y) {
    auto q = p;
    for (auto& l : q.levels) l.map(0, y * 40 + x) = 1.0;
    return q;
  };
  const BBox b{0.43, 0.51, 0.2, 0.15};
  const BBox shifted{b.cx + 1.0 / 40, b.cy + 1.0 / 40, b.w, b.h};
  const auto r0 = roiPool(peak(17, 20), b, 3, 3);
  const auto r1 = roiPool(peak(18, 21), shifted, 3, 3);
  EXPECT_EQ(r0.level, r1.level);
  EXPECT_GT(r0.data.maxCoeff(), 0.0);
  EXPECT_LT((r0.data - r1.data).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(RoiPool, LevelRule) {
  EXPECT_EQ(roiLevel({0.5, 0.5, 0.5, 1.0}, 3), 2);
  EXPECT_EQ(roiLevel({0.5, 0.5, 1.0, 1.0}, 3), 2);
  EXPECT_EQ(roiLevel({0.5, 0.5, 0.25, 0.5}, 3), 1);
  EXPECT_EQ(roiLevel({0.5, 0.5, 0.01, 0.01}, 3), 0);
  EXPECT_EQ(roiLevel({0.5, 0.5, 0.5, 1.0}, 2), 1);
}

TEST(RoiPool, FiniteOnRandomBoxes) {
  std::mt19937_64 rng(13);
  FeaturePyramid<double> p = rampPyramid(3, 24, 36, 4);
  for (auto& l : p.levels) l.map = fixture::randomMat<double>(rng, 4, l.map.cols());
  for (int k = 0; k < 500; ++k) EXPECT_TRUE(roiPool(p, oracle::randomBox(rng, 0.001, 1.0), 3, 3).data.allFinite());
}

TEST(Tokenize, WhitespaceAndCodePoints) {
  EXPECT_EQ(tokenize("  big  summer sale "), (std::vector<std::string>{"big", "summer", "sale"}));
  EXPECT_EQ(tokenize("\xE5\xA4\xA7\xE4\xBF\x83").size(), 2u);
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(charCount("\xE5\xA4\xA7x"), 2);
}

class TextEncoderTest : public ::testing::Test {
 protected:
  ModelConfig cfg = deskConfig();
  Rng rng{5};
  TextEncoder<double> enc{cfg, rng};
};

TEST_F(TextEncoderTest, EmptyList) {
  const auto t = enc.encode({});
  EXPECT_EQ(t.L.rows(), cfg.D_n);
  EXPECT_EQ(t.L.cols(), cfg.d);
  EXPECT_TRUE(t.L.isZero(0));
  EXPECT_EQ(t.count(), 0);
}

TEST_F(TextEncoderTest, MaskAndPaddingRows) {
  const auto t = enc.encode({"hello world", "sale"});
  EXPECT_EQ(t.count(), 2);
  for (int r = 2; r < cfg.D_n; ++r) EXPECT_TRUE(t.L.row(r).isZero(0));
}

TEST_F(TextEncoderTest, PermutationPermutesRows) {
  const auto a = enc.encode({"alpha beta", "gamma", "delta epsilon zeta"});
  const auto b = enc.encode({"delta epsilon zeta", "alpha beta", "gamma"});
  EXPECT_EQ(a.L.row(0), b.L.row(1));
  EXPECT_EQ(a.L.row(1), b.L.row(2));
  EXPECT_EQ(a.L.row(2), b.L.row(0));
}

TEST_F(TextEncoderTest, RowsIndependent) {
  const auto a = enc.encode({"alpha", "beta"});
  const auto b = enc.encode({"alpha", "something else entirely"});
  EXPECT_EQ(a.L.row(0), b.L.row(0));
}

TEST_F(TextEncoderTest, LengthAndContentSubvectors) {
  const std::string s4 = "abcd", s40(40, 'a');
  const auto t = enc.encode({s4, s40, s4});
  const int cd = cfg.content_dim();
  EXPECT_GT((t.L.row(0).tail(cfg.length_dim()) - t.L.row(1).tail(cfg.length_dim())).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_EQ(t.L.row(0).head(cd), t.L.row(2).head(cd));
  // Length part is the sinusoid of the character count.
  EXPECT_NEAR(t.L(0, cd), std::sin(4.0), 1e-12);
  EXPECT_NEAR(t.L(0, cd + 1), std::cos(4.0), 1e-12);
}

TEST_F(TextEncoderTest, TooManySlogans) {
  std::vector<std::string> s(static_cast<std::size_t>(cfg.D_n + 1), "x");
  EXPECT_THROW(enc.encode(s), std::invalid_argument);
  s.pop_back();
  EXPECT_NO_THROW(enc.encode(s));
}
