#pragma once

// Layout decoder: per-RoI concatenation of the VTRAM map, the GRAM feature and
// the RoI feature, plus the noisy box and slot identity; a sinusoidal step
// embedding is added to the fused vector, then a shared two-layer MLP predicts
// class logits and the x0 box in signal space.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "radm/core.hpp"
#include "radm/encoders.hpp"
#include "radm/tensor.hpp"

namespace radm {

template <class S>
struct DecoderOutput {
  Mat<S> logits;  // N x num_classes
  Mat<S> boxes;   // N x 4 (signal space)
};

template <class S>
struct DecoderWeights {
  Param<S> w1, b1, w2, b2, wc, bc, wb, bb;

  DecoderWeights() = default;
  DecoderWeights(const ModelConfig& cfg, Rng& rng)
      : w1("decoder.fc1.weight", "decoder", cfg.hidden, cfg.fused_dim()),
        b1("decoder.fc1.bias", "decoder", cfg.hidden, 1),
        w2("decoder.fc2.weight", "decoder", cfg.hidden, cfg.hidden),
        b2("decoder.fc2.bias", "decoder", cfg.hidden, 1),
        wc("decoder.cls.weight", "decoder", cfg.num_classes, cfg.hidden),
        bc("decoder.cls.bias", "decoder", cfg.num_classes, 1),
        wb("decoder.box.weight", "decoder", 4, cfg.hidden),
        bb("decoder.box.bias", "decoder", 4, 1) {
    initUniform(w1, rng, cfg.fused_dim(), std::sqrt(2.0));
    initUniform(w2, rng, cfg.hidden, std::sqrt(2.0));
    initUniform(wc, rng, cfg.hidden, 0.1);
    initUniform(wb, rng, cfg.hidden, 0.1);
  }

  std::vector<Param<S>*> parameters() { return {&w1, &b1, &w2, &b2, &wc, &bc, &wb, &bb}; }
};

/// Sinusoidal embedding of the diffusion step, one value per fused dimension.
template <class S>
Vec<S> timeEmbedding(int t, int dim) {
  std::vector<double> buf(static_cast<std::size_t>(dim));
  sinusoid(static_cast<double>(t), dim, buf.data());
  Vec<S> v(dim);
  for (int k = 0; k < dim; ++k) v(k) = static_cast<S>(buf[static_cast<std::size_t>(k)]);
  return v;
}

template <class S>
struct DecoderCache {
  Mat<S> X;   // fused input, D x N
  Mat<S> H1;  // hidden x N (post-ReLU)
  Mat<S> H2;
};

/// Builds the fused D x N input matrix.
template <class S>
Mat<S> fuseInputs(const std::vector<Mat<S>>& M, const Mat<S>& T, const std::vector<RoIFeature<S>>& V,
                  const Mat<S>& xt, int t, const ModelConfig& cfg) {
  const int n = static_cast<int>(V.size());
  const int cp = cfg.C * cfg.rois();
  if (static_cast<int>(M.size()) != n || T.rows() != n || T.cols() != cfg.d_t || xt.rows() != n || xt.cols() != 4)
    throw std::invalid_argument("decode: inputs disagree on RoI count or width");
  if (cfg.slot_embedding && n != cfg.N) throw std::invalid_argument("decode: slot embedding needs exactly N RoIs");
  const int D = cfg.fused_dim();
  Mat<S> X = Mat<S>::Zero(D, n);
  for (int i = 0; i < n; ++i) {
    if (M[static_cast<std::size_t>(i)].size() != cp || V[static_cast<std::size_t>(i)].data.size() != cp)
      throw std::invalid_argument("decode: RoI feature shape mismatch");
    int off = 0;
    X.col(i).segment(off, cp) = Eigen::Map<const Vec<S>>(M[static_cast<std::size_t>(i)].data(), cp);
    off += cp;
    X.col(i).segment(off, cfg.d_t) = T.row(i).transpose();
    off += cfg.d_t;
    X.col(i).segment(off, cp) = Eigen::Map<const Vec<S>>(V[static_cast<std::size_t>(i)].data.data(), cp);
    off += cp;
    for (int c = 0; c < 4; ++c) X(off + c, i) = xt(i, c);
    off += 4;
    for (int c = 0; c < 4; ++c)
      for (int f = 0; f < cfg.box_freqs; ++f) {
        const double a = static_cast<double>(xt(i, c)) * std::ldexp(std::numbers::pi / 2, f);
        X(off++, i) = static_cast<S>(std::sin(a));
        X(off++, i) = static_cast<S>(std::cos(a));
      }
    if (cfg.slot_embedding) X(off + i, i) = S(1);
  }
  X.colwise() += timeEmbedding<S>(t, D);
  return X;
}

template <class S>
DecoderOutput<S> decode(const std::vector<Mat<S>>& M, const Mat<S>& T, const std::vector<RoIFeature<S>>& V,
                        const Mat<S>& xt, int t, const DecoderWeights<S>& w, const ModelConfig& cfg,
                        DecoderCache<S>* cache = nullptr) {
  Mat<S> X = fuseInputs(M, T, V, xt, t, cfg);
  Mat<S> H1 = ((w.w1.value * X).colwise() + w.b1.value.col(0)).cwiseMax(S(0));
  Mat<S> H2 = ((w.w2.value * H1).colwise() + w.b2.value.col(0)).cwiseMax(S(0));
  DecoderOutput<S> out;
  out.logits = ((w.wc.value * H2).colwise() + w.bc.value.col(0)).transpose();
  out.boxes = ((w.wb.value * H2).colwise() + w.bb.value.col(0)).transpose();
  if (cache) *cache = DecoderCache<S>{std::move(X), std::move(H1), std::move(H2)};
  return out;
}

/// Accumulates weight gradients; adds d/dM, d/dT and d/dV into the given buffers.
template <class S>
void decodeBackward(const DecoderCache<S>& cache, const Mat<S>& dlogits, const Mat<S>& dboxes, DecoderWeights<S>& w,
                    const ModelConfig& cfg, std::vector<Mat<S>>& dM, Mat<S>& dT, std::vector<Mat<S>>& dV) {
  const Mat<S> dlT = dlogits.transpose(), dbT = dboxes.transpose();
  w.wc.grad.noalias() += dlT * cache.H2.transpose();
  w.bc.grad.col(0) += dlT.rowwise().sum();
  w.wb.grad.noalias() += dbT * cache.H2.transpose();
  w.bb.grad.col(0) += dbT.rowwise().sum();
  Mat<S> dH2 = w.wc.value.transpose() * dlT + w.wb.value.transpose() * dbT;
  dH2 = (cache.H2.array() > S(0)).select(dH2, S(0));
  w.w2.grad.noalias() += dH2 * cache.H1.transpose();
  w.b2.grad.col(0) += dH2.rowwise().sum();
  Mat<S> dH1 = w.w2.value.transpose() * dH2;
  dH1 = (cache.H1.array() > S(0)).select(dH1, S(0));
  w.w1.grad.noalias() += dH1 * cache.X.transpose();
  w.b1.grad.col(0) += dH1.rowwise().sum();
  const Mat<S> dX = w.w1.value.transpose() * dH1;
  const int cp = cfg.C * cfg.rois();
  for (Eigen::Index i = 0; i < dX.cols(); ++i) {
    Eigen::Map<Vec<S>>(dM[static_cast<std::size_t>(i)].data(), cp) += dX.col(i).segment(0, cp);
    dT.row(i) += dX.col(i).segment(cp, cfg.d_t).transpose();
    Eigen::Map<Vec<S>>(dV[static_cast<std::size_t>(i)].data(), cp) += dX.col(i).segment(cp + cfg.d_t, cp);
  }
}

}  // namespace radm
