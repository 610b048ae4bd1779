#pragma once

// Geometry relation module: pairwise log-ratio geometry, sin/cos expansion,
// row-softmax relation weights, and relation-weighted mixing of projected
// RoI features.

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "radm/core.hpp"
#include "radm/encoders.hpp"
#include "radm/tensor.hpp"

namespace radm {

/// R_ij for all ordered pairs, stored row-major at index i*n + j.
struct GeoRelation {
  int n = 0;
  std::vector<std::array<double, 4>> r;
  const std::array<double, 4>& at(int i, int j) const { return r[static_cast<std::size_t>(i * n + j)]; }
};

inline GeoRelation relativeGeometry(const std::vector<BBox>& boxes, double eps_geo) {
  GeoRelation R;
  R.n = static_cast<int>(boxes.size());
  R.r.resize(boxes.size() * boxes.size());
  for (int i = 0; i < R.n; ++i)
    for (int j = 0; j < R.n; ++j) {
      const BBox& a = boxes[static_cast<std::size_t>(i)];
      const BBox& b = boxes[static_cast<std::size_t>(j)];
      R.r[static_cast<std::size_t>(i * R.n + j)] = {std::log(std::max(std::abs(a.cx - b.cx), eps_geo) / b.w),
                                                    std::log(std::max(std::abs(a.cy - b.cy), eps_geo) / b.h),
                                                    std::log(a.w / b.w), std::log(a.h / b.h)};
    }
  return R;
}

/// Expands each of the four components into d_h/4 alternating sin/cos values
/// with wavelengths 10000^(8k/d_h). Output: (n*n) x d_h.
inline Mat<double> sinCosEmbed(const GeoRelation& R, int d_h) {
  if (d_h <= 0 || d_h % 8 != 0)
    throw std::invalid_argument("sinCosEmbed: d_h must be a positive multiple of 8, got " + std::to_string(d_h));
  const int per = d_h / 4;
  std::vector<double> inv(static_cast<std::size_t>(per / 2));
  for (int k = 0; k < per / 2; ++k) inv[static_cast<std::size_t>(k)] = std::pow(10000.0, -8.0 * k / d_h);
  Mat<double> E(static_cast<Eigen::Index>(R.r.size()), d_h);
  for (std::size_t p = 0; p < R.r.size(); ++p)
    for (int c = 0; c < 4; ++c)
      for (int k = 0; k < per / 2; ++k) {
        const double a = R.r[p][static_cast<std::size_t>(c)] * inv[static_cast<std::size_t>(k)];
        E(static_cast<Eigen::Index>(p), c * per + 2 * k) = std::sin(a);
        E(static_cast<Eigen::Index>(p), c * per + 2 * k + 1) = std::cos(a);
      }
  return E;
}

template <class S>
Mat<S> rowSoftmax(const Mat<S>& logits) {
  Mat<S> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const S mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

/// Row-stochastic relation weights from embedded pairs and a d_h -> 1 projection.
template <class S>
Mat<S> geoWeights(const Mat<S>& embedded, const Vec<S>& proj, int n) {
  if (embedded.rows() != static_cast<Eigen::Index>(n) * n || embedded.cols() != proj.size())
    throw std::invalid_argument("geoWeights: shape mismatch");
  const Vec<S> flat = embedded * proj;
  Mat<S> logits(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) logits(i, j) = flat(i * n + j);
  return rowSoftmax<S>(logits);
}

/// Flattens each C x P RoI map into a column: (C*P) x n.
template <class S>
Mat<S> flattenRois(const std::vector<RoIFeature<S>>& rois) {
  if (rois.empty()) return {};
  const Eigen::Index len = rois.front().data.size();
  Mat<S> out(len, static_cast<Eigen::Index>(rois.size()));
  for (std::size_t i = 0; i < rois.size(); ++i) {
    if (rois[i].data.size() != len) throw std::invalid_argument("flattenRois: inconsistent RoI shapes");
    out.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Vec<S>>(rois[i].data.data(), len);
  }
  return out;
}

/// T = Wgeo * P(V')^T, with P(v) = proj * v + bias. Returns n x d_t.
template <class S>
Mat<S> geoFeatures(const Mat<S>& Wgeo, const std::vector<RoIFeature<S>>& rois, const Mat<S>& proj,
                   const Vec<S>& bias) {
  const Eigen::Index n = static_cast<Eigen::Index>(rois.size());
  if (Wgeo.rows() != n || Wgeo.cols() != n) throw std::invalid_argument("geoFeatures: Wgeo must be N x N");
  const Mat<S> V = flattenRois(rois);
  if (proj.cols() != V.rows()) throw std::invalid_argument("geoFeatures: projection width mismatch");
  const Mat<S> P = (proj * V).colwise() + bias;  // d_t x n
  return Wgeo * P.transpose();
}

template <class S>
struct GramWeights {
  Param<S> logit;   // d_h x 1
  Param<S> proj;    // d_t x (C*Wr*Hr)
  Param<S> proj_b;  // d_t x 1

  GramWeights() = default;
  GramWeights(const ModelConfig& cfg, Rng& rng)
      : logit("gram.logit.weight", "gram", cfg.d_h, 1),
        proj("gram.proj.weight", "gram", cfg.d_t, cfg.C * cfg.rois()),
        proj_b("gram.proj.bias", "gram", cfg.d_t, 1) {
    initUniform(logit, rng, cfg.d_h);
    initUniform(proj, rng, cfg.C * cfg.rois());
  }

  std::vector<Param<S>*> parameters() { return {&logit, &proj, &proj_b}; }
};

template <class S>
struct GramCache {
  Mat<S> E;     // (n*n) x d_h
  Mat<S> W;     // n x n
  Mat<S> V;     // (C*P) x n
  Mat<S> P;     // d_t x n
};

template <class S>
Mat<S> gramForward(const std::vector<RoIFeature<S>>& rois, const GramWeights<S>& w, double eps_geo, int d_h,
                   GramCache<S>* cache = nullptr) {
  const int n = static_cast<int>(rois.size());
  std::vector<BBox> boxes;
  for (const auto& r : rois) boxes.push_back(r.box);
  const Mat<S> E = sinCosEmbed(relativeGeometry(boxes, eps_geo), d_h).cast<S>();
  const Mat<S> W = geoWeights<S>(E, w.logit.value.col(0), n);
  const Mat<S> V = flattenRois(rois);
  const Mat<S> P = (w.proj.value * V).colwise() + w.proj_b.value.col(0);
  Mat<S> T = W * P.transpose();
  if (cache) *cache = GramCache<S>{E, W, V, P};
  return T;
}

/// Accumulates weight gradients and adds d/dV_i into `drois`.
template <class S>
void gramBackward(const GramCache<S>& cache, const Mat<S>& dT, GramWeights<S>& w, std::vector<Mat<S>>& drois) {
  const Eigen::Index n = cache.W.rows();
  const Mat<S> dW = dT * cache.P;                          // n x n
  const Mat<S> dP = dT.transpose() * cache.W;              // d_t x n
  w.proj.grad.noalias() += dP * cache.V.transpose();
  w.proj_b.grad.col(0) += dP.rowwise().sum();
  const Mat<S> dV = w.proj.value.transpose() * dP;         // (C*P) x n
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Map<Vec<S>> di(drois[static_cast<std::size_t>(i)].data(), dV.rows());
    di += dV.col(i);
  }
  const Vec<S> rowdot = (dW.array() * cache.W.array()).rowwise().sum();
  const Mat<S> dZ = (cache.W.array() * (dW.colwise() - rowdot).array()).matrix();
  Vec<S> dflat(n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) dflat(i * n + j) = dZ(i, j);
  w.logit.grad.col(0).noalias() += cache.E.transpose() * dflat;
}

}  // namespace radm
