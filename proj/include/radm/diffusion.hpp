#pragma once

// Forward corruption of box sets and the reverse (DDIM) sampling loop with
// pinned-slot conditioning.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "radm/core.hpp"
#include "radm/raster.hpp"
#include "radm/tensor.hpp"

namespace radm {

/// N x 4 box set in signal space (rows are boxes, columns cx, cy, w, h).
using BoxSignal = Mat<double>;

enum class ScheduleKind { Cosine, Linear };

/// betas[0] is unused (0); alphas_cumprod[0] = 1 and alphas_cumprod[i] = prod_{j<=i} (1 - betas[j]).
struct DiffusionSchedule {
  int T = 0;
  ScheduleKind kind = ScheduleKind::Cosine;
  std::vector<double> betas;
  std::vector<double> alphas_cumprod;
};

inline DiffusionSchedule makeSchedule(int T, ScheduleKind kind = ScheduleKind::Cosine, double beta_start = 1e-4,
                                      double beta_end = 0.02) {
  if (T <= 0) throw std::invalid_argument("makeSchedule: T must be >= 1, got " + std::to_string(T));
  DiffusionSchedule s;
  s.T = T;
  s.kind = kind;
  s.betas.assign(T + 1, 0.0);
  if (kind == ScheduleKind::Linear) {
    for (int i = 1; i <= T; ++i)
      s.betas[i] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * (i - 1) / (T - 1);
  } else {
    constexpr double offset = 0.008;
    auto f = [&](int i) {
      const double c = std::cos((static_cast<double>(i) / T + offset) / (1 + offset) * std::numbers::pi / 2);
      return c * c;
    };
    for (int i = 1; i <= T; ++i) s.betas[i] = std::clamp(1.0 - f(i) / f(i - 1), 1e-8, 0.999);
  }
  s.alphas_cumprod.assign(T + 1, 1.0);
  for (int i = 1; i <= T; ++i) s.alphas_cumprod[i] = s.alphas_cumprod[i - 1] * (1.0 - s.betas[i]);
  return s;
}

/// Maps [0,1] box coordinates to [-scale, scale] and back.
struct SignalCodec {
  double signal_scale = 1.0;

  double encode(double x) const { return signal_scale * (2.0 * x - 1.0); }
  double decode(double s) const { return (s / signal_scale + 1.0) / 2.0; }

  BoxSignal encode(const std::vector<BBox>& boxes) const {
    BoxSignal out(static_cast<Eigen::Index>(boxes.size()), 4);
    for (std::size_t i = 0; i < boxes.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = encodeRow(boxes[i]);
    return out;
  }
  Eigen::RowVector4d encodeRow(const BBox& b) const {
    return {encode(b.cx), encode(b.cy), encode(b.w), encode(b.h)};
  }
  BBox decodeRow(const Eigen::Ref<const Eigen::RowVectorXd>& r) const {
    return {decode(r(0)), decode(r(1)), decode(r(2)), decode(r(3))};
  }
  std::vector<BBox> decode(const BoxSignal& s) const {
    std::vector<BBox> out;
    out.reserve(static_cast<std::size_t>(s.rows()));
    for (Eigen::Index i = 0; i < s.rows(); ++i) out.push_back(decodeRow(s.row(i)));
    return out;
  }
};

inline void checkStep(int i, const DiffusionSchedule& sched, const char* what) {
  if (i < 0 || i > sched.T)
    throw std::invalid_argument(std::string(what) + ": step " + std::to_string(i) + " outside [0, " +
                                std::to_string(sched.T) + "]");
}

/// x_i = sqrt(abar_i) x0 + sqrt(1 - abar_i) eps. Step 0 returns x0.
inline BoxSignal qSample(const BoxSignal& x0, int i, const BoxSignal& eps, const DiffusionSchedule& sched) {
  checkStep(i, sched, "qSample");
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw std::invalid_argument("qSample: shape mismatch");
  if (i == 0) return x0;
  const double a = sched.alphas_cumprod[i];
  return std::sqrt(a) * x0 + std::sqrt(1.0 - a) * eps;
}

struct DegenerateScheduleError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Deterministic DDIM update from step i to i_prev given the reconstruction x0_hat.
/// With eta > 0 and a noise source, adds the DDPM-style stochastic term.
inline BoxSignal ddimStep(const BoxSignal& x_i, const BoxSignal& x0_hat, int i, int i_prev,
                          const DiffusionSchedule& sched, double eta = 0.0, Rng* rng = nullptr) {
  checkStep(i, sched, "ddimStep");
  checkStep(i_prev, sched, "ddimStep");
  if (i_prev >= i) throw std::invalid_argument("ddimStep: i_prev must be < i");
  const double a = sched.alphas_cumprod[i];
  if (1.0 - a <= 0.0) throw DegenerateScheduleError("ddimStep: alphas_cumprod[" + std::to_string(i) + "] == 1");
  if (i_prev == 0) return x0_hat;
  const double ap = sched.alphas_cumprod[i_prev];
  const BoxSignal eps_hat = (x_i - std::sqrt(a) * x0_hat) / std::sqrt(1.0 - a);
  double sigma = 0.0;
  if (eta > 0.0 && rng != nullptr) sigma = eta * std::sqrt((1 - ap) / (1 - a)) * std::sqrt(1 - a / ap);
  BoxSignal out = std::sqrt(ap) * x0_hat + std::sqrt(std::max(0.0, 1 - ap - sigma * sigma)) * eps_hat;
  if (sigma > 0.0) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (Eigen::Index k = 0; k < out.size(); ++k) out.data()[k] += sigma * n(*rng);
  }
  return out;
}

/// Uniformly spaced, strictly decreasing step sequence T = t_0 > t_1 > ... > t_steps = 0.
inline std::vector<int> samplingSteps(int T, int steps) {
  if (steps < 1 || steps > T)
    throw std::invalid_argument("steps must be in [1, " + std::to_string(T) + "], got " + std::to_string(steps));
  std::vector<int> out(steps + 1);
  for (int k = 0; k <= steps; ++k)
    out[k] = static_cast<int>((static_cast<long long>(T) * (steps - k)) / steps);
  return out;
}

struct PinnedElement {
  int slot = 0;
  Element element;
};

struct GenerationConstraints {
  std::vector<PinnedElement> pinned;
  std::vector<std::string> slogans;
  std::uint64_t seed = 0;
};

/// Constraint violation; `field` names the offending request field.
struct ConstraintError : std::invalid_argument {
  std::string field;
  ConstraintError(std::string f, const std::string& msg) : std::invalid_argument(msg), field(std::move(f)) {}
};

inline void validateConstraints(const GenerationConstraints& c, const ModelConfig& cfg) {
  std::set<int> seen;
  for (std::size_t k = 0; k < c.pinned.size(); ++k) {
    const int slot = c.pinned[k].slot;
    const std::string field = "pinned[" + std::to_string(k) + "].slot";
    if (slot < 0 || slot >= cfg.N)
      throw ConstraintError(field, "pinned slot " + std::to_string(slot) + " is outside [0, " +
                                       std::to_string(cfg.N) + ")");
    if (!seen.insert(slot).second) throw ConstraintError(field, "pinned slot " + std::to_string(slot) + " repeated");
    if (c.pinned[k].element.cls == ElementClass::Background)
      throw ConstraintError("pinned[" + std::to_string(k) + "].cls", "pinned elements cannot be background");
  }
  if (static_cast<int>(c.slogans.size()) > cfg.D_n)
    throw ConstraintError("slogans", "got " + std::to_string(c.slogans.size()) + " slogans, max is " +
                                         std::to_string(cfg.D_n));
}

struct Prediction {
  Mat<double> logits;  // N x num_classes
  BoxSignal boxes;     // N x 4, x0 reconstruction in signal space
};

/// Anything that reconstructs x0 from (x_t, t) given a prepared image/text context.
template <class D>
concept Denoiser = requires(const D& d, const Raster& img, const std::vector<std::string>& slogans,
                            const BoxSignal& x, int t) {
  { d.config() } -> std::convertible_to<const ModelConfig&>;
  { d.predict(d.prepare(img, slogans), x, t) } -> std::same_as<Prediction>;
};

struct SamplerOptions {
  int steps = 100;
  double eta = 0.0;
  double score_threshold = 0.5;
  bool record_trajectory = false;
};

struct TrajectoryStep {
  int step = 0;
  std::vector<BBox> boxes;
  std::vector<double> scores;
};

struct SampleResult {
  Layout layout;
  std::vector<TrajectoryStep> trajectory;
};

inline std::pair<int, double> argmaxSoftmax(const Eigen::Ref<const Eigen::RowVectorXd>& logits) {
  const double mx = logits.maxCoeff();
  const Eigen::RowVectorXd e = (logits.array() - mx).exp().matrix();
  Eigen::Index best = 0;
  e.maxCoeff(&best);
  return {static_cast<int>(best), e(best) / e.sum()};
}

/// Highest non-background probability per slot.
inline std::vector<double> foregroundScores(const Mat<double>& logits) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Eigen::RowVectorXd e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp().matrix();
    out.push_back(e.head(kNumClasses - 1).maxCoeff() / e.sum());
  }
  return out;
}

/// Generates a layout by DDIM from N Gaussian boxes. Pinned slots are re-noised
/// to the current step after every update and emitted verbatim at the end.
template <Denoiser D>
SampleResult sample(const D& model, const Raster& image, const GenerationConstraints& constraints,
                    const DiffusionSchedule& sched, const SamplerOptions& opts = {}) {
  const ModelConfig& cfg = model.config();
  validateConstraints(constraints, cfg);
  if (image.empty()) throw std::invalid_argument("sample: empty image");
  if (sched.T != cfg.T) throw std::invalid_argument("sample: schedule T does not match ModelConfig.T");
  const auto steps = samplingSteps(cfg.T, opts.steps);
  const SignalCodec codec{cfg.signal_scale};

  Rng rng(constraints.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  BoxSignal eps0(cfg.N, 4);
  for (Eigen::Index k = 0; k < eps0.size(); ++k) eps0.data()[k] = normal(rng);

  auto applyPins = [&](BoxSignal& x, int step) {
    for (const auto& p : constraints.pinned) {
      const BoxSignal clean = codec.encodeRow(p.element.box);
      x.row(p.slot) = qSample(clean, step, eps0.row(p.slot), sched);
    }
  };

  const auto ctx = model.prepare(image, constraints.slogans);
  BoxSignal x = eps0;
  applyPins(x, steps.front());

  SampleResult result;
  Prediction pred;
  for (std::size_t k = 0; k + 1 < steps.size(); ++k) {
    const int i = steps[k];
    const int i_prev = steps[k + 1];
    pred = model.predict(ctx, x, i);
    const BoxSignal x0_hat = pred.boxes.cwiseMax(-cfg.signal_scale).cwiseMin(cfg.signal_scale);
    x = ddimStep(x, x0_hat, i, i_prev, sched, opts.eta, &rng);
    applyPins(x, i_prev);
    if (opts.record_trajectory) {
      TrajectoryStep ts;
      ts.step = i_prev;
      for (Eigen::Index r = 0; r < x.rows(); ++r) ts.boxes.push_back(clampBox(codec.decodeRow(x.row(r))));
      ts.scores = foregroundScores(pred.logits);
      result.trajectory.push_back(std::move(ts));
    }
  }

  Layout& out = result.layout;
  out.canvas_w = image.width;
  out.canvas_h = image.height;
  std::vector<const PinnedElement*> pin_at(static_cast<std::size_t>(cfg.N), nullptr);
  for (const auto& p : constraints.pinned) pin_at[static_cast<std::size_t>(p.slot)] = &p;
  for (int s = 0; s < cfg.N; ++s) {
    if (pin_at[static_cast<std::size_t>(s)] != nullptr) {
      out.elements.push_back(pin_at[static_cast<std::size_t>(s)]->element);
      continue;
    }
    const auto [cls, score] = argmaxSoftmax(pred.logits.row(s));
    if (cls == static_cast<int>(ElementClass::Background) || score < opts.score_threshold) continue;
    out.elements.push_back({clampBox(codec.decodeRow(x.row(s))), static_cast<ElementClass>(cls), score});
  }
  return result;
}

}  // namespace radm
