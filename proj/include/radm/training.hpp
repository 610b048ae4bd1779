#pragma once

// Training loop: corrupt padded ground truth, denoise, weighted loss, AdamW update.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "radm/checkpoint.hpp"
#include "radm/config_io.hpp"
#include "radm/diffusion.hpp"
#include "radm/losses.hpp"
#include "radm/model.hpp"
#include "radm/optim.hpp"

namespace radm {

/// Slot order used for index-aligned targets: texts (slogan order), logo, underlay, embellishment.
inline int canonicalRank(ElementClass c) {
  switch (c) {
    case ElementClass::Text: return 0;
    case ElementClass::Logo: return 1;
    case ElementClass::Underlay: return 2;
    case ElementClass::Embellishment: return 3;
    case ElementClass::Background: return 4;
  }
  return 4;
}

inline std::vector<Element> canonicalOrder(const Layout& layout) {
  std::vector<Element> out = layout.elements;
  std::stable_sort(out.begin(), out.end(),
                   [](const Element& a, const Element& b) { return canonicalRank(a.cls) < canonicalRank(b.cls); });
  return out;
}

struct PaddedTargets {
  BoxSignal boxes;          // N x 4 signal
  std::vector<int> classes;
};

/// Pads the ground truth to N slots with uniform random boxes labelled BACKGROUND.
inline PaddedTargets padTargets(const Layout& gt, const ModelConfig& cfg, Rng& rng) {
  const auto elems = canonicalOrder(gt);
  if (static_cast<int>(elems.size()) > cfg.N)
    throw std::invalid_argument("layout has " + std::to_string(elems.size()) + " elements but N = " +
                                std::to_string(cfg.N));
  const SignalCodec codec{cfg.signal_scale};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PaddedTargets t;
  t.boxes.resize(cfg.N, 4);
  for (int i = 0; i < cfg.N; ++i) {
    BBox b;
    if (i < static_cast<int>(elems.size())) {
      b = clampBox(elems[static_cast<std::size_t>(i)].box);
      t.classes.push_back(static_cast<int>(elems[static_cast<std::size_t>(i)].cls));
    } else {
      const double cx = u(rng), cy = u(rng), w = u(rng), h = u(rng);
      b = clampBox({cx, cy, w, h});
      t.classes.push_back(static_cast<int>(ElementClass::Background));
    }
    t.boxes.row(i) = codec.encodeRow(b);
  }
  return t;
}

struct TrainingError : std::runtime_error {
  std::string dump;
  TrainingError(const std::string& msg, std::string d) : std::runtime_error(msg), dump(std::move(d)) {}
};

class Trainer {
 public:
  struct Prepared {
    std::string id;
    StemInput<float> stem;
    TokenizedSlogans tokens;
    Layout gt;
  };

  Trainer(const ModelConfig& mcfg, const TrainConfig& tcfg, const std::vector<PosterSample>& data)
      : mcfg_(mcfg),
        tcfg_(tcfg),
        model_(mcfg, tcfg.flags, tcfg.seed),
        sched_(makeSchedule(mcfg.T, tcfg.schedule)),
        opt_(AdamWConfig{tcfg.lr, tcfg.weight_decay, tcfg.beta1, tcfg.beta2, tcfg.adam_eps}),
        batch_rng_(tcfg.seed ^ 0x9E3779B97F4A7C15ull),
        noise_rng_(tcfg.seed ^ 0xD1B54A32D192ED03ull) {
    tcfg.validate();
    if (data.empty()) throw std::invalid_argument("Trainer: empty dataset");
    for (const auto& s : data) {
      if (static_cast<int>(s.gt.elements.size()) > mcfg.N)
        throw std::invalid_argument("sample " + s.id + " has more elements than N");
      data_.push_back({s.id, model_.prepareImage(s.image), model_.tokenize(s.slogans), s.gt});
    }
  }

  Model<float>& model() { return model_; }
  const Model<float>& model() const { return model_; }
  const DiffusionSchedule& schedule() const { return sched_; }
  long long step() const { return step_; }
  const TrainConfig& trainConfig() const { return tcfg_; }

  int totalSteps() const {
    if (tcfg_.max_steps > 0) return tcfg_.max_steps;
    const int per_epoch = static_cast<int>((data_.size() + tcfg_.batch_size - 1) / tcfg_.batch_size);
    return tcfg_.epochs * per_epoch;
  }

  CheckpointMeta meta() const { return {mcfg_, tcfg_, tcfg_.seed, step_, RADM_GIT_DESCRIBE}; }

  /// Next batch from a per-epoch shuffled order; the final batch of an epoch may be short.
  std::vector<std::size_t> nextBatch() {
    if (cursor_ >= order_.size()) {
      order_.resize(data_.size());
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      std::shuffle(order_.begin(), order_.end(), batch_rng_);
      cursor_ = 0;
    }
    const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(tcfg_.batch_size));
    std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                   order_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end;
    return batch;
  }

  /// One optimizer update on `batch`; returns the mean pre-update loss.
  LossBreakdown trainStep(std::span<const std::size_t> batch) {
    if (batch.empty()) throw std::invalid_argument("trainStep: empty batch");
    model_.zeroGrad();
    const SignalCodec codec{mcfg_.signal_scale};
    std::uniform_int_distribution<int> step_dist(1, mcfg_.T);
    std::normal_distribution<double> normal(0.0, 1.0);
    LossBreakdown mean;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    nlohmann::json record = nlohmann::json::array();
    for (std::size_t idx : batch) {
      const Prepared& s = data_.at(idx);
      const int t = step_dist(noise_rng_);
      const PaddedTargets tgt = padTargets(s.gt, mcfg_, noise_rng_);
      BoxSignal eps(mcfg_.N, 4);
      for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = normal(noise_rng_);
      const BoxSignal xt = qSample(tgt.boxes, t, eps, sched_);
      Model<float>::Cache cache;
      const auto out = model_.forward(s.stem, s.tokens, xt.cast<float>(), t, cache);
      Mat<double> dlogits;
      BoxSignal dboxes;
      const LossBreakdown lb = trainingLoss(out.logits.cast<double>(), out.boxes.cast<double>(), tgt.boxes,
                                            tgt.classes, codec, focal_, weights_, &dlogits, &dboxes);
      record.push_back({{"id", s.id}, {"t", t}, {"total", lb.total}});
      if (!std::isfinite(lb.total)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step_) + " on sample " + s.id,
                            nlohmann::json{{"step", step_}, {"batch", record}}.dump());
      }
      mean.cls += lb.cls * inv_b;
      mean.l1 += lb.l1 * inv_b;
      mean.giou += lb.giou * inv_b;
      mean.total += lb.total * inv_b;
      model_.backward(cache, s.tokens, (dlogits * inv_b).cast<float>(), (dboxes * inv_b).cast<float>());
    }
    opt_.step(model_.parameters(), [this](const Param<float>& p) { return model_.groupActive(p.group); });
    ++step_;
    return mean;
  }

  LossBreakdown trainStep() {
    const auto batch = nextBatch();
    return trainStep(batch);
  }

  /// Runs until totalSteps(); `on_step` sees (step, loss) after every update.
  void run(const std::function<void(long long, const LossBreakdown&)>& on_step = {}) {
    while (step_ < totalSteps()) {
      const LossBreakdown lb = trainStep();
      if (on_step) on_step(step_, lb);
    }
  }

  void save(const std::filesystem::path& path) { saveCheckpoint(model_, meta(), path); }

 private:
  ModelConfig mcfg_;
  TrainConfig tcfg_;
  Model<float> model_;
  DiffusionSchedule sched_;
  AdamW<float> opt_;
  Rng batch_rng_;
  Rng noise_rng_;
  std::vector<Prepared> data_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  long long step_ = 0;
  FocalParams focal_;
  LossWeights weights_;
};

inline nlohmann::json lossLogRecord(long long step, const LossBreakdown& lb, double lr) {
  return {{"step", step}, {"cls", lb.cls}, {"l1", lb.l1}, {"giou", lb.giou}, {"total", lb.total}, {"lr", lr}};
}

}  // namespace radm
