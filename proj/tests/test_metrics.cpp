#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>

#include "fixtures.hpp"
#include "radm/metrics.hpp"

using namespace radm;

namespace {

Layout make(std::initializer_list<Element> e, int w = 64, int h = 64) {
  Layout l;
  l.canvas_w = w;
  l.canvas_h = h;
  l.elements = e;
  return l;
}

Element text(BBox b) { return {b, ElementClass::Text, 1}; }
Element logo(BBox b) { return {b, ElementClass::Logo, 1}; }
Element under(BBox b) { return {b, ElementClass::Underlay, 1}; }

Raster randomGray(std::mt19937_64& rng, int w, int h) {
  Raster r(w, h, 1);
  std::uniform_real_distribution<float> u(0, 1);
  for (auto& v : r.data) v = u(rng);
  return r;
}

}  // namespace

TEST(Alignment, Examples) {
  EXPECT_EQ(alignment(make({text({0.3, 0.2, 0.2, 0.1}), text({0.35, 0.7, 0.3, 0.1})})), 0.0);
  EXPECT_EQ(alignment(make({text({0.3, 0.2, 0.2, 0.1})})), 0.0);
  const Layout three = make({text({0.2, 0.2, 0.1, 0.1}), logo({0.53, 0.41, 0.2, 0.12}), under({0.81, 0.77, 0.3, 0.2})});
  EXPECT_NEAR(alignment(three), oracle::alignment(three), 1e-9);
}

TEST(Overlap, Examples) {
  const BBox b{0.4, 0.4, 0.2, 0.2};
  EXPECT_DOUBLE_EQ(overlap(make({text(b), text(b)})), 1.0);
  EXPECT_EQ(overlap(make({text(b), under(b)})), 0.0);
  EXPECT_NEAR(overlap(make({text({0.4, 0.5, 0.2, 0.2}), logo({0.5, 0.5, 0.2, 0.2})})), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(overlap(make({})), 0.0);
}

TEST(Underlay, Examples) {
  EXPECT_EQ(underlayValidity(make({text({0.5, 0.5, 0.25, 0.125}), under({0.5, 0.5, 0.5, 0.25})})), 1.0);
  EXPECT_EQ(underlayValidity(make({text({0.2, 0.2, 0.1, 0.1}), under({0.8, 0.8, 0.1, 0.1})})), 0.0);
  EXPECT_NEAR(underlayValidity(make({text({0.5, 0.5, 0.2, 0.1}), under({0.6, 0.5, 0.2, 0.2})})), 0.5, 1e-12);
  EXPECT_EQ(underlayValidity(make({text({0.5, 0.5, 0.2, 0.1})})), 0.0);
  const Layout two = make({text({0.5, 0.5, 0.25, 0.125}), under({0.5, 0.5, 0.5, 0.25}), under({0.1, 0.9, 0.1, 0.1})});
  EXPECT_DOUBLE_EQ(underlayValidity(two), 0.5);
  EXPECT_DOUBLE_EQ(validUnderlayFraction(two, 0.9), 0.5);
}

TEST(Occupancy, Examples) {
  const std::vector<Layout> all = {make({text({0.5, 0.5, 0.1, 0.1})}), make({logo({0.5, 0.5, 0.1, 0.1})})};
  EXPECT_EQ(occupancy(all), 1.0);
  const std::vector<Layout> half = {make({text({0.5, 0.5, 0.1, 0.1})}), make({})};
  EXPECT_EQ(occupancy(half), 0.5);
  EXPECT_THROW(occupancy(std::vector<Layout>{}), std::invalid_argument);
}

TEST(Readability, ConstantImageIsZero) {
  const Raster img(64, 64, 3, 0.4f);
  EXPECT_EQ(readability(make({text({0.5, 0.5, 0.5, 0.5}), logo({0.2, 0.2, 0.1, 0.1})}), img), 0.0);
}

TEST(Readability, TextOnUnderlayExcluded) {
  std::mt19937_64 rng(1);
  const Raster img = randomGray(rng, 64, 64);
  EXPECT_EQ(readability(make({text({0.5, 0.5, 0.25, 0.125}), under({0.5, 0.5, 0.5, 0.25})}), img), 0.0);
  EXPECT_GT(readability(make({text({0.5, 0.5, 0.25, 0.125})}), img), 0.0);
}

TEST(Readability, VerticalStepEdge) {
  // Columns x < 32 are 0, x >= 32 are 1. The Sobel x-response is 4 on columns
  // 31 and 32 and 0 elsewhere, so a box spanning columns [16, 48) averages 8/32.
  Raster img(64, 64, 1, 0.f);
  for (int y = 0; y < 64; ++y)
    for (int x = 32; x < 64; ++x) img.at(x, y) = 1.f;
  const double r = readability(make({text({0.5, 0.5, 0.5, 0.5})}), img);
  EXPECT_NEAR(r, 8.0 / 32.0, 0.05 * 8.0 / 32.0);
}

TEST(Readability, CanvasMismatch) {
  EXPECT_THROW(readability(make({}, 10, 10), Raster(11, 10, 1)), std::invalid_argument);
}

TEST(Occlusion, ZeroSaliencyRegion) {
  Raster sal(64, 64, 1, 0.f);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) sal.at(x, y) = 1.f;
  const auto o = subjectOcclusion(make({text({0.75, 0.75, 0.25, 0.25})}), sal);
  EXPECT_EQ(o.r_shm, 0.0);
  EXPECT_EQ(o.r_sub, 0.0);
  const auto full = subjectOcclusion(make({logo({0.125, 0.125, 0.25, 0.25})}), sal);
  EXPECT_EQ(full.r_sub, 1.0);
  EXPECT_EQ(full.r_shm, 1.0);
  EXPECT_EQ(subjectOcclusion(make({text({0.5, 0.5, 1, 1})}), Raster(64, 64, 1, 0.f)).r_sub, 0.0);
}

TEST(Occlusion, Checkerboard) {
  Raster sal(64, 64, 1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) sal.at(x, y) = ((x + y) % 2) ? 0.9f : 0.1f;
  const Layout l = make({text({0.25, 0.5, 0.5, 1.0})});
  const auto o = subjectOcclusion(l, sal);
  EXPECT_NEAR(o.r_shm, oracle::occlusion(l, sal).first, 1e-6);
  EXPECT_NEAR(o.r_shm, 0.5, 1e-6);
  EXPECT_NEAR(o.r_sub, 0.5, 1e-12);
}

TEST(BoxMask, PixelCenterRule) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 300; ++k) {
    const BBox b = oracle::randomBox(rng, 0.01, 0.9);
    const int w = 17 + k % 40, h = 23 + k % 31;
    const auto mask = boxMask({b}, w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        ASSERT_EQ(mask[static_cast<std::size_t>(y * w + x)] != 0, oracle::pixelIn(b, x, y, w, h));
  }
}

TEST(Metrics, MatchBruteForceOracles) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Layout l = oracle::randomLayout(rng, 6, 64, 64);
    const Raster img = randomGray(rng, 64, 64), sal = randomGray(rng, 64, 64);
    EXPECT_NEAR(alignment(l), oracle::alignment(l), 1e-6);
    EXPECT_NEAR(overlap(l), oracle::overlap(l), 1e-6);
    EXPECT_NEAR(underlayValidity(l), oracle::underlay(l), 1e-6);
    const double ro = oracle::readability(l, img);
    EXPECT_NEAR(readability(l, img), ro, 0.05 * ro + 1e-9);
    const auto [shm, sub] = oracle::occlusion(l, sal);
    const auto o = subjectOcclusion(l, sal);
    EXPECT_NEAR(o.r_shm, shm, 0.05 * shm + 1e-9);
    EXPECT_NEAR(o.r_sub, sub, 0.05 * sub + 1e-9);
  }
}

TEST(Metrics, OrderInvariant) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Layout l = oracle::randomLayout(rng, 6, 64, 64);
    const Raster img = randomGray(rng, 64, 64), sal = randomGray(rng, 64, 64);
    const auto a = layoutMetrics(l, img, sal);
    std::shuffle(l.elements.begin(), l.elements.end(), rng);
    const auto b = layoutMetrics(l, img, sal);
    EXPECT_NEAR(a.r_ali, b.r_ali, 1e-12);
    EXPECT_NEAR(a.r_ove, b.r_ove, 1e-12);
    EXPECT_EQ(a.r_und.has_value(), b.r_und.has_value());
    if (a.r_und) EXPECT_NEAR(*a.r_und, *b.r_und, 1e-12);
    EXPECT_EQ(a.r_com.has_value(), b.r_com.has_value());
    if (a.r_com) EXPECT_NEAR(*a.r_com, *b.r_com, 1e-9);
    EXPECT_NEAR(a.r_shm, b.r_shm, 1e-12);
    EXPECT_EQ(a.r_sub, b.r_sub);
  }
}

TEST(Metrics, PairMetricsIgnoreCanvasSize) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Layout l = oracle::randomLayout(rng, 6, 64, 64);
    const double ali = alignment(l), ove = overlap(l);
    l.canvas_w = 640;
    l.canvas_h = 960;
    EXPECT_EQ(alignment(l), ali);
    EXPECT_EQ(overlap(l), ove);
  }
}

TEST(Metrics, AggregateAndReports) {
  std::vector<PosterSample> samples(2);
  for (auto& s : samples) {
    s.image = Raster(64, 64, 3, 0.5f);
    s.saliency = Raster(64, 64, 1, 0.f);
  }
  samples[0].id = "a";
  samples[1].id = "b";
  const std::vector<Layout> layouts = {make({text({0.5, 0.5, 0.25, 0.125}), under({0.5, 0.5, 0.5, 0.25})}), make({})};
  const auto per = evaluateLayouts(samples, layouts);
  const auto r = aggregate(per);
  EXPECT_EQ(r.layouts, 2u);
  EXPECT_EQ(r.r_occ, 0.5);
  EXPECT_EQ(r.r_und, 1.0);
  EXPECT_EQ(r.with_underlay, 1u);
  EXPECT_EQ(r.with_open_text, 0u);
  EXPECT_EQ(toJson(r)["r_occ"], 0.5);
  const std::string row = csvRow(r), header = kReportCsvHeader;
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
  const std::string csv = perSampleCsv(per);
  EXPECT_NE(csv.find("\na,2,"), std::string::npos);
  EXPECT_NE(csv.find("\nb,0,"), std::string::npos);
  EXPECT_THROW(evaluateLayouts(samples, std::span<const Layout>(layouts).first(1)), std::invalid_argument);
  EXPECT_THROW(aggregate(std::span<const LayoutMetrics>{}), std::invalid_argument);
}
