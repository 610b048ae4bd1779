#pragma once

// Visual-textual relation module: every spatial position of a RoI, augmented
// with a projection of the RoI's box, queries the slogan features through
// single-head cross-attention. Padding slogans are excluded from the softmax.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "radm/core.hpp"
#include "radm/encoders.hpp"
#include "radm/tensor.hpp"

namespace radm {

template <class S>
struct VtramWeights {
  Param<S> pos, pos_b;  // P_g : 4 -> C
  Param<S> q, q_b;      // P_q : 2C -> C
  Param<S> k, k_b;      // P_k : d -> C
  Param<S> v, v_b;      // P_v : d -> C
  Param<S> o;           // P_o : C -> C, no bias so that empty text gives M = 0

  VtramWeights() = default;
  VtramWeights(const ModelConfig& cfg, Rng& rng)
      : pos("vtram.pos.weight", "vtram", cfg.C, 4),
        pos_b("vtram.pos.bias", "vtram", cfg.C, 1),
        q("vtram.q.weight", "vtram", cfg.C, 2 * cfg.C),
        q_b("vtram.q.bias", "vtram", cfg.C, 1),
        k("vtram.k.weight", "vtram", cfg.C, cfg.d),
        k_b("vtram.k.bias", "vtram", cfg.C, 1),
        v("vtram.v.weight", "vtram", cfg.C, cfg.d),
        v_b("vtram.v.bias", "vtram", cfg.C, 1),
        o("vtram.o.weight", "vtram", cfg.C, cfg.C) {
    initUniform(pos, rng, 4.0);
    initUniform(q, rng, 2.0 * cfg.C);
    initUniform(k, rng, cfg.d);
    initUniform(v, rng, cfg.d);
    initUniform(o, rng, cfg.C);
  }

  std::vector<Param<S>*> parameters() { return {&pos, &pos_b, &q, &q_b, &k, &k_b, &v, &v_b, &o}; }
};

template <class S>
struct VtramCache {
  std::vector<int> real;     // indices of unmasked text rows
  Mat<S> Lr;                 // m x d
  Mat<S> K, Vv;              // C x m
  std::vector<Vec<S>> g;     // box coordinates per RoI
  std::vector<Vec<S>> pe;    // P_g(G_i)
  std::vector<Mat<S>> Q;     // C x P
  std::vector<Mat<S>> A;     // P x m attention
  std::vector<Mat<S>> O;     // C x P attended values
};

template <class S>
Vec<S> boxVector(const BBox& b) {
  Vec<S> g(4);
  g << static_cast<S>(b.cx), static_cast<S>(b.cy), static_cast<S>(b.w), static_cast<S>(b.h);
  return g;
}

/// Returns one C x (Wr*Hr) multi-modal map per RoI.
template <class S>
std::vector<Mat<S>> vtramForward(const std::vector<RoIFeature<S>>& rois, const TextFeatures<S>& texts,
                                 const VtramWeights<S>& w, int expected_n, VtramCache<S>* cache = nullptr) {
  if (static_cast<int>(rois.size()) != expected_n)
    throw std::invalid_argument("vtramForward: got " + std::to_string(rois.size()) + " RoIs, expected " +
                                std::to_string(expected_n));
  const Eigen::Index C = w.o.value.rows();
  std::vector<Mat<S>> out;
  out.reserve(rois.size());
  std::vector<int> real;
  for (std::size_t r = 0; r < texts.mask.size(); ++r)
    if (texts.mask[r]) real.push_back(static_cast<int>(r));
  if (real.empty()) {
    for (const auto& roi : rois) out.push_back(Mat<S>::Zero(C, roi.data.cols()));
    if (cache) *cache = VtramCache<S>{};
    return out;
  }
  const Eigen::Index m = static_cast<Eigen::Index>(real.size());
  Mat<S> Lr(m, texts.L.cols());
  for (Eigen::Index r = 0; r < m; ++r) Lr.row(r) = texts.L.row(real[static_cast<std::size_t>(r)]);
  const Mat<S> K = (w.k.value * Lr.transpose()).colwise() + w.k_b.value.col(0);
  const Mat<S> Vv = (w.v.value * Lr.transpose()).colwise() + w.v_b.value.col(0);
  const S scale = S(1) / std::sqrt(static_cast<S>(C));
  if (cache) {
    cache->real = real;
    cache->Lr = Lr;
    cache->K = K;
    cache->Vv = Vv;
    cache->g.clear();
    cache->pe.clear();
    cache->Q.clear();
    cache->A.clear();
    cache->O.clear();
  }
  for (const auto& roi : rois) {
    const Vec<S> g = boxVector<S>(roi.box);
    const Vec<S> pe = w.pos.value * g + w.pos_b.value.col(0);
    // P_q applied to concat(V_i, broadcast(pe)) splits into a per-position and a constant term.
    const Vec<S> qconst = w.q.value.rightCols(C) * pe + w.q_b.value.col(0);
    const Mat<S> Q = (w.q.value.leftCols(C) * roi.data).colwise() + qconst;
    Mat<S> A = (Q.transpose() * K) * scale;  // P x m
    for (Eigen::Index p = 0; p < A.rows(); ++p) {
      const S mx = A.row(p).maxCoeff();
      A.row(p) = (A.row(p).array() - mx).exp().matrix();
      A.row(p) /= A.row(p).sum();
    }
    Mat<S> O = Vv * A.transpose();  // C x P
    out.push_back(w.o.value * O);
    if (cache) {
      cache->g.push_back(g);
      cache->pe.push_back(pe);
      cache->Q.push_back(Q);
      cache->A.push_back(std::move(A));
      cache->O.push_back(std::move(O));
    }
  }
  return out;
}

/// Accumulates weight gradients; adds d/dV_i into `drois` and d/dL into `dL` (D_n x d).
template <class S>
void vtramBackward(const std::vector<RoIFeature<S>>& rois, const VtramCache<S>& cache, const std::vector<Mat<S>>& dM,
                   VtramWeights<S>& w, std::vector<Mat<S>>& drois, Mat<S>& dL) {
  if (cache.real.empty()) return;
  const Eigen::Index C = w.o.value.rows();
  const S scale = S(1) / std::sqrt(static_cast<S>(C));
  Mat<S> dK = Mat<S>::Zero(cache.K.rows(), cache.K.cols());
  Mat<S> dVv = Mat<S>::Zero(cache.Vv.rows(), cache.Vv.cols());
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const Mat<S>& A = cache.A[i];
    w.o.grad.noalias() += dM[i] * cache.O[i].transpose();
    const Mat<S> dO = w.o.value.transpose() * dM[i];        // C x P
    dVv.noalias() += dO * A;                                  // C x m
    const Mat<S> dA = dO.transpose() * cache.Vv;              // P x m
    const Vec<S> rowdot = (dA.array() * A.array()).rowwise().sum();
    const Mat<S> dS = (A.array() * (dA.colwise() - rowdot).array()).matrix() * scale;
    const Mat<S> dQ = cache.K * dS.transpose();               // C x P
    dK.noalias() += cache.Q[i] * dS;                          // C x m
    w.q.grad.leftCols(C).noalias() += dQ * rois[i].data.transpose();
    const Vec<S> dQsum = dQ.rowwise().sum();
    w.q.grad.rightCols(C).noalias() += dQsum * cache.pe[i].transpose();
    w.q_b.grad.col(0) += dQsum;
    drois[i].noalias() += w.q.value.leftCols(C).transpose() * dQ;
    const Vec<S> dpe = w.q.value.rightCols(C).transpose() * dQsum;
    w.pos.grad.noalias() += dpe * cache.g[i].transpose();
    w.pos_b.grad.col(0) += dpe;
  }
  w.k.grad.noalias() += dK * cache.Lr;
  w.k_b.grad.col(0) += dK.rowwise().sum();
  w.v.grad.noalias() += dVv * cache.Lr;
  w.v_b.grad.col(0) += dVv.rowwise().sum();
  const Mat<S> dLr = dK.transpose() * w.k.value + dVv.transpose() * w.v.value;  // m x d
  for (std::size_t r = 0; r < cache.real.size(); ++r)
    dL.row(cache.real[r]) += dLr.row(static_cast<Eigen::Index>(r));
}

}  // namespace radm
