#include <gtest/gtest.h>

#include <numeric>

#include "fixtures.hpp"
#include "radm/decoder.hpp"
#include "radm/losses.hpp"
#include "radm/model.hpp"
#include "radm/optim.hpp"

using namespace radm;

namespace {

struct DecoderInputs {
  std::vector<Mat<double>> M;
  Mat<double> T;
  std::vector<RoIFeature<double>> V;
  Mat<double> xt;
};

DecoderInputs randomInputs(std::mt19937_64& rng, const ModelConfig& cfg) {
  DecoderInputs in;
  for (int i = 0; i < cfg.N; ++i) in.M.push_back(fixture::randomMat<double>(rng, cfg.C, cfg.rois()));
  in.T = fixture::randomMat<double>(rng, cfg.N, cfg.d_t);
  in.V = fixture::randomRois<double>(rng, cfg.N, cfg.C, cfg.rois());
  in.xt = fixture::randomMat<double>(rng, cfg.N, 4);
  return in;
}

double ceRow(const std::vector<double>& z, int y) { return -std::log(oracle::softmax(z)[static_cast<std::size_t>(y)]); }

}  // namespace

TEST(Decoder, DeterministicAndShaped) {
  const ModelConfig cfg = deskConfig();
  Rng r(1);
  const DecoderWeights<double> w(cfg, r);
  std::mt19937_64 rng(2);
  const auto in = randomInputs(rng, cfg);
  const auto a = decode(in.M, in.T, in.V, in.xt, 10, w, cfg);
  const auto b = decode(in.M, in.T, in.V, in.xt, 10, w, cfg);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_EQ(a.boxes, b.boxes);
  EXPECT_EQ(a.logits.rows(), cfg.N);
  EXPECT_EQ(a.logits.cols(), cfg.num_classes);
  EXPECT_EQ(a.boxes.cols(), 4);
  EXPECT_TRUE(a.logits.allFinite());
}

TEST(Decoder, TimeEmbeddingIsLive) {
  const ModelConfig cfg = deskConfig();
  Rng r(3);
  const DecoderWeights<double> w(cfg, r);
  std::mt19937_64 rng(4);
  const auto in = randomInputs(rng, cfg);
  const auto a = decode(in.M, in.T, in.V, in.xt, 1, w, cfg);
  const auto b = decode(in.M, in.T, in.V, in.xt, 999, w, cfg);
  EXPECT_GT((a.logits - b.logits).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_GT((a.boxes - b.boxes).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Decoder, PermutationEquivariantWithoutSlotEmbedding) {
  ModelConfig cfg = deskConfig();
  cfg.slot_embedding = false;
  Rng r(5);
  const DecoderWeights<double> w(cfg, r);
  std::mt19937_64 rng(6);
  const auto in = randomInputs(rng, cfg);
  std::vector<int> perm(static_cast<std::size_t>(cfg.N));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  DecoderInputs p = in;
  for (int i = 0; i < cfg.N; ++i) {
    const auto src = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
    p.M[static_cast<std::size_t>(i)] = in.M[src];
    p.T.row(i) = in.T.row(static_cast<Eigen::Index>(src));
    p.V[static_cast<std::size_t>(i)] = in.V[src];
    p.xt.row(i) = in.xt.row(static_cast<Eigen::Index>(src));
  }
  const auto a = decode(in.M, in.T, in.V, in.xt, 50, w, cfg);
  const auto b = decode(p.M, p.T, p.V, p.xt, 50, w, cfg);
  for (int i = 0; i < cfg.N; ++i) {
    const auto src = perm[static_cast<std::size_t>(i)];
    EXPECT_LT((b.logits.row(i) - a.logits.row(src)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((b.boxes.row(i) - a.boxes.row(src)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Decoder, ShapeMismatch) {
  const ModelConfig cfg = deskConfig();
  Rng r(7);
  const DecoderWeights<double> w(cfg, r);
  std::mt19937_64 rng(8);
  auto in = randomInputs(rng, cfg);
  auto bad = in;
  bad.T = Mat<double>::Zero(cfg.N, cfg.d_t + 1);
  EXPECT_THROW(decode(bad.M, bad.T, bad.V, bad.xt, 1, w, cfg), std::invalid_argument);
  bad = in;
  bad.M.pop_back();
  EXPECT_THROW(decode(bad.M, bad.T, bad.V, bad.xt, 1, w, cfg), std::invalid_argument);
  bad = in;
  bad.M[0] = Mat<double>::Zero(cfg.C + 1, cfg.rois());
  EXPECT_THROW(decode(bad.M, bad.T, bad.V, bad.xt, 1, w, cfg), std::invalid_argument);
}

TEST(FocalLoss, HalfProbability) {
  Mat<double> logits = Mat<double>::Zero(1, 5);
  logits(0, 2) = std::log(4.0);
  EXPECT_NEAR(focalLoss(logits, {2}), 0.25 * 0.25 * std::log(2.0), 1e-12);
  EXPECT_NEAR(focalLoss(logits, {2}), 0.0433, 1e-4);
}

TEST(FocalLoss, PerfectPrediction) {
  Mat<double> logits = Mat<double>::Zero(2, 5);
  logits(0, 1) = 200;
  logits(1, 4) = 200;
  EXPECT_LT(focalLoss(logits, {1, 4}), 1e-12);
}

TEST(FocalLoss, ReducesToCrossEntropy) {
  std::mt19937_64 rng(9);
  const Mat<double> logits = fixture::randomMat<double>(rng, 6, 5, 2.0);
  const std::vector<int> y = {0, 4, 2, 2, 1, 3};
  double ce = 0;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> z;
    for (int k = 0; k < 5; ++k) z.push_back(logits(i, k));
    ce += ceRow(z, y[static_cast<std::size_t>(i)]);
  }
  EXPECT_NEAR(focalLoss(logits, y, {1.0, 0.0}), ce / 6, 1e-9);
}

TEST(FocalLoss, MatchesRowOracle) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat<double> logits = fixture::randomMat<double>(rng, 4, 5, 3.0);
    std::vector<int> y;
    double expected = 0;
    for (int i = 0; i < 4; ++i) {
      y.push_back(std::uniform_int_distribution<int>(0, 4)(rng));
      std::vector<double> z;
      for (int k = 0; k < 5; ++k) z.push_back(logits(i, k));
      expected += oracle::focalRow(z, y.back(), 0.25, 2.0);
    }
    EXPECT_NEAR(focalLoss(logits, y), expected / 4, 1e-12);
  }
}

TEST(FocalLoss, BadTargets) {
  EXPECT_THROW(focalLoss(Mat<double>::Zero(2, 5), {0}), std::invalid_argument);
  EXPECT_THROW(focalLoss(Mat<double>::Zero(1, 5), {5}), std::invalid_argument);
}

TEST(GiouLoss, Examples) {
  const BBox b{0.4, 0.3, 0.2, 0.1};
  EXPECT_NEAR(giouLoss(b, b), 0.0, 1e-12);
  EXPECT_GT(giouLoss({0.1, 0.1, 0.05, 0.05}, {0.9, 0.9, 0.05, 0.05}), 1.0);
  EXPECT_NEAR(giouLoss({0.25, 0.5, 0.5, 1.0}, {0.75, 0.5, 0.5, 1.0}), 1.0, 1e-12);
}

TEST(GiouLoss, MatchesScalarOracleAndRange) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 1000; ++k) {
    BBox p = oracle::randomBox(rng), g = oracle::randomBox(rng);
    if (k % 10 == 0) p.w = 1e-5;
    const double v = giouLoss(p, g);
    EXPECT_NEAR(v, oracle::giouScalar(p.cx, p.cy, p.w, p.h, g.cx, g.cy, g.w, g.h), 1e-12);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 2.0);
  }
}

TEST(TrainingLoss, WeightedTotal) {
  const LossWeights lw;
  EXPECT_NEAR(lw.cls * 0.2 + lw.l1 * 0.1 + lw.giou * 0.3, 1.8, 1e-12);
  std::mt19937_64 rng(12);
  const SignalCodec codec{1.0};
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 6;
    const Mat<double> logits = fixture::randomMat<double>(rng, n, 5);
    std::vector<BBox> gtb, pb;
    std::vector<int> cls;
    for (int i = 0; i < n; ++i) {
      gtb.push_back(oracle::randomBox(rng));
      pb.push_back(oracle::randomBox(rng));
      cls.push_back(std::uniform_int_distribution<int>(0, 4)(rng));
    }
    const BoxSignal gt = codec.encode(gtb), pred = codec.encode(pb);
    const auto lb = trainingLoss(logits, pred, gt, cls, codec);
    EXPECT_NEAR(lb.total, 5 * lb.cls + 5 * lb.l1 + lb.giou, 1e-9);

    int fg = 0;
    double l1 = 0, giou = 0, focal = 0;
    for (int i = 0; i < n; ++i) {
      std::vector<double> z;
      for (int k = 0; k < 5; ++k) z.push_back(logits(i, k));
      focal += oracle::focalRow(z, cls[static_cast<std::size_t>(i)], 0.25, 2.0) / n;
      if (cls[static_cast<std::size_t>(i)] == 4) continue;
      ++fg;
      for (int k = 0; k < 4; ++k) l1 += std::abs(pred(i, k) - gt(i, k));
      const BBox& p = pb[static_cast<std::size_t>(i)];
      const BBox& g = gtb[static_cast<std::size_t>(i)];
      giou += oracle::giouScalar(p.cx, p.cy, p.w, p.h, g.cx, g.cy, g.w, g.h);
    }
    EXPECT_NEAR(lb.cls, focal, 1e-12);
    EXPECT_NEAR(lb.l1, fg ? l1 / (4.0 * fg) : 0.0, 1e-9);
    EXPECT_NEAR(lb.giou, fg ? giou / fg : 0.0, 1e-9);
    EXPECT_GE(lb.total, 0.0);
  }
}

TEST(TrainingLoss, PerfectPrediction) {
  const SignalCodec codec{1.0};
  const BoxSignal gt = codec.encode({{0.3, 0.2, 0.2, 0.1}, {0.6, 0.7, 0.4, 0.2}, {0.5, 0.5, 0.1, 0.1}});
  const std::vector<int> cls = {1, 2, 4};
  Mat<double> logits = Mat<double>::Zero(3, 5);
  for (int i = 0; i < 3; ++i) logits(i, cls[static_cast<std::size_t>(i)]) = 100;
  const auto lb = trainingLoss(logits, gt, gt, cls, codec);
  EXPECT_LT(lb.total, 1e-9);
}

TEST(TrainingLoss, AllBackground) {
  const SignalCodec codec{1.0};
  const BoxSignal gt = codec.encode({{0.3, 0.2, 0.2, 0.1}}), pred = codec.encode({{0.7, 0.7, 0.1, 0.1}});
  const auto lb = trainingLoss(Mat<double>::Zero(1, 5), pred, gt, {4}, codec);
  EXPECT_EQ(lb.l1, 0.0);
  EXPECT_EQ(lb.giou, 0.0);
}

TEST(AdamW, OneStepDecreasesLossOnFixedBatch) {
  ModelConfig cfg = deskConfig();
  cfg.T = 100;
  Model<double> model(cfg, {}, 3);
  const SignalCodec codec{cfg.signal_scale};
  Raster img(40, 60, 3, 0.3f);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) img.at(x, y, 0) = 0.9f;
  const auto stem = model.prepareImage(img);
  const auto tokens = model.tokenize({"summer sale", "free shipping"});
  std::mt19937_64 rng(14);
  std::vector<BBox> boxes;
  std::vector<int> cls;
  for (int i = 0; i < cfg.N; ++i) {
    boxes.push_back(oracle::randomBox(rng));
    cls.push_back(i < 3 ? 1 : 4);
  }
  const BoxSignal gt = codec.encode(boxes);
  const Mat<double> xt = gt + 0.3 * fixture::randomMat<double>(rng, cfg.N, 4);
  auto lossAndGrad = [&](bool grad) {
    typename Model<double>::Cache cache;
    const auto out = model.forward(stem, tokens, xt, 40, cache);
    Mat<double> dl;
    BoxSignal db;
    const auto lb = trainingLoss(out.logits, out.boxes, gt, cls, codec, {}, {}, grad ? &dl : nullptr,
                                 grad ? &db : nullptr);
    if (grad) {
      model.zeroGrad();
      model.backward(cache, tokens, dl, db);
    }
    return lb.total;
  };
  AdamW<double> opt({2.5e-5, 1e-4});
  for (int k = 0; k < 3; ++k) {
    lossAndGrad(true);
    opt.step(model.parameters());
  }
  const double before = lossAndGrad(true);
  opt.step(model.parameters());
  EXPECT_LT(lossAndGrad(false), before);
}

TEST(AdamW, InactiveParamsUntouched) {
  Param<double> a("a", "x", 2, 2), b("b", "y", 2, 2);
  a.grad.setOnes();
  b.grad.setOnes();
  AdamW<double> opt;
  opt.step({&a, &b}, [](const Param<double>& p) { return p.group == "x"; });
  EXPECT_FALSE(a.value.isZero(0));
  EXPECT_TRUE(b.value.isZero(0));
}
