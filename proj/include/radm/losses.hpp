#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "radm/core.hpp"
#include "radm/diffusion.hpp"
#include "radm/tensor.hpp"

namespace radm {

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

struct LossWeights {
  double cls = 5.0;
  double l1 = 5.0;
  double giou = 1.0;
};

struct LossBreakdown {
  double cls = 0;
  double l1 = 0;
  double giou = 0;
  double total = 0;
};

/// Softmax focal loss, mean over rows: -alpha (1 - p_t)^gamma log p_t.
/// `grad` (optional) receives d(loss)/d(logits).
inline double focalLoss(const Mat<double>& logits, const std::vector<int>& targets, FocalParams fp = {},
                        Mat<double>* grad = nullptr) {
  const Eigen::Index n = logits.rows(), k = logits.cols();
  if (static_cast<Eigen::Index>(targets.size()) != n) throw std::invalid_argument("focalLoss: target count mismatch");
  if (grad) *grad = Mat<double>::Zero(n, k);
  if (n == 0) return 0.0;
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw std::invalid_argument("focalLoss: target class out of range");
    const double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd p = (logits.row(i).array() - mx).exp().matrix();
    const double z = p.sum();
    p /= z;
    const double log_pt = logits(i, y) - mx - std::log(z);
    const double pt = p(y);
    const double q = 1.0 - pt;
    const double mod = fp.gamma == 0.0 ? 1.0 : std::pow(q, fp.gamma);
    total += -fp.alpha * mod * log_pt;
    if (grad) {
      // d/dpt of -alpha q^g log pt, then through softmax: dpt/dz_j = pt (delta_jy - p_j).
      const double dmod = fp.gamma == 0.0 ? 0.0 : fp.gamma * std::pow(q, fp.gamma - 1.0);
      const double dpt_term = -fp.alpha * (-dmod * log_pt + mod / pt);
      for (Eigen::Index j = 0; j < k; ++j) {
        const double dptdz = pt * ((j == y ? 1.0 : 0.0) - p(j));
        (*grad)(i, j) = dpt_term * dptdz / static_cast<double>(n);
      }
    }
  }
  return total / static_cast<double>(n);
}

/// 1 - GIoU(pred, gt). Widths/heights below kMinBoxSize are floored (zero gradient there).
/// `grad` (optional) receives d/d(cx, cy, w, h) of pred.
inline double giouLoss(const BBox& pred, const BBox& gt, std::array<double, 4>* grad = nullptr) {
  const bool w_ok = pred.w > kMinBoxSize, h_ok = pred.h > kMinBoxSize;
  const BBox p{pred.cx, pred.cy, w_ok ? pred.w : kMinBoxSize, h_ok ? pred.h : kMinBoxSize};
  const Corners a = toCorners(p), g = toCorners(gt);
  const double ap = (a.x2 - a.x1) * (a.y2 - a.y1);
  const double ag = (g.x2 - g.x1) * (g.y2 - g.y1);
  const double iw = std::min(a.x2, g.x2) - std::max(a.x1, g.x1);
  const double ih = std::min(a.y2, g.y2) - std::max(a.y1, g.y1);
  const bool overlap = iw > 0 && ih > 0;
  const double inter = overlap ? iw * ih : 0.0;
  const double uni = ap + ag - inter;
  const double ew = std::max(a.x2, g.x2) - std::min(a.x1, g.x1);
  const double eh = std::max(a.y2, g.y2) - std::min(a.y1, g.y1);
  const double enc = ew * eh;
  const double loss = 2.0 - inter / uni - uni / enc;
  if (grad) {
    const double dI = -1.0 / uni, dU = inter / (uni * uni) - 1.0 / enc, dE = uni / (enc * enc);
    // Gradients with respect to corners x1, y1, x2, y2.
    std::array<double, 4> dAp = {-(a.y2 - a.y1), -(a.x2 - a.x1), (a.y2 - a.y1), (a.x2 - a.x1)};
    std::array<double, 4> dInt = {0, 0, 0, 0};
    if (overlap) {
      dInt[0] = a.x1 > g.x1 ? -ih : 0.0;
      dInt[2] = a.x2 < g.x2 ? ih : 0.0;
      dInt[1] = a.y1 > g.y1 ? -iw : 0.0;
      dInt[3] = a.y2 < g.y2 ? iw : 0.0;
    }
    std::array<double, 4> dEnc = {a.x1 < g.x1 ? -eh : 0.0, a.y1 < g.y1 ? -ew : 0.0, a.x2 > g.x2 ? eh : 0.0,
                                  a.y2 > g.y2 ? ew : 0.0};
    std::array<double, 4> dc{};
    for (int k = 0; k < 4; ++k) dc[k] = (dI - dU) * dInt[k] + dU * dAp[k] + dE * dEnc[k];
    (*grad)[0] = dc[0] + dc[2];
    (*grad)[1] = dc[1] + dc[3];
    (*grad)[2] = w_ok ? 0.5 * (dc[2] - dc[0]) : 0.0;
    (*grad)[3] = h_ok ? 0.5 * (dc[3] - dc[1]) : 0.0;
  }
  return loss;
}

/// Index-aligned detection loss over N slots. Classification covers every
/// slot; L1 (signal space) and GIoU ([0,1] space) cover non-background slots.
inline LossBreakdown trainingLoss(const Mat<double>& logits, const BoxSignal& pred, const BoxSignal& gt,
                                  const std::vector<int>& gt_cls, const SignalCodec& codec, FocalParams fp = {},
                                  LossWeights lw = {}, Mat<double>* dlogits = nullptr, BoxSignal* dpred = nullptr) {
  const Eigen::Index n = pred.rows();
  if (gt.rows() != n || logits.rows() != n || static_cast<Eigen::Index>(gt_cls.size()) != n)
    throw std::invalid_argument("trainingLoss: slot count mismatch");
  LossBreakdown lb;
  lb.cls = focalLoss(logits, gt_cls, fp, dlogits);
  if (dpred) *dpred = BoxSignal::Zero(n, 4);
  int fg = 0;
  for (int c : gt_cls)
    if (c != static_cast<int>(ElementClass::Background)) ++fg;
  if (fg > 0) {
    const double inv_l1 = 1.0 / (4.0 * fg), inv_g = 1.0 / fg;
    const double dbox_dsig = 1.0 / (2.0 * codec.signal_scale);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (gt_cls[static_cast<std::size_t>(i)] == static_cast<int>(ElementClass::Background)) continue;
      for (int k = 0; k < 4; ++k) {
        const double diff = pred(i, k) - gt(i, k);
        lb.l1 += std::abs(diff) * inv_l1;
        if (dpred) (*dpred)(i, k) += lw.l1 * (diff > 0 ? inv_l1 : diff < 0 ? -inv_l1 : 0.0);
      }
      std::array<double, 4> g{};
      lb.giou += giouLoss(codec.decodeRow(pred.row(i)), codec.decodeRow(gt.row(i)), dpred ? &g : nullptr) * inv_g;
      if (dpred)
        for (int k = 0; k < 4; ++k) (*dpred)(i, k) += lw.giou * g[static_cast<std::size_t>(k)] * dbox_dsig * inv_g;
    }
  }
  if (dlogits) *dlogits *= lw.cls;
  lb.total = lw.cls * lb.cls + lw.l1 * lb.l1 + lw.giou * lb.giou;
  return lb;
}

}  // namespace radm
