#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "radm/core.hpp"
#include "radm/diffusion.hpp"
#include "radm/model.hpp"

namespace radm {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double lr = 2.5e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  AblationFlags flags;
  int max_steps = 0;  // > 0 overrides epochs
  ScheduleKind schedule = ScheduleKind::Cosine;

  void validate() const {
    if (!(lr > 0) || !(weight_decay > 0)) throw std::invalid_argument("TrainConfig: lr and weight_decay must be > 0");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  }
};

inline std::string scheduleName(ScheduleKind k) { return k == ScheduleKind::Linear ? "linear" : "cosine"; }

inline ScheduleKind parseSchedule(const std::string& s) {
  if (s == "cosine") return ScheduleKind::Cosine;
  if (s == "linear") return ScheduleKind::Linear;
  throw std::invalid_argument("unknown schedule '" + s + "'");
}

inline nlohmann::json toJson(const ModelConfig& c) {
  return {{"N", c.N},
          {"D_n", c.D_n},
          {"d", c.d},
          {"C", c.C},
          {"Wr", c.Wr},
          {"Hr", c.Hr},
          {"d_h", c.d_h},
          {"d_t", c.d_t},
          {"num_classes", c.num_classes},
          {"T", c.T},
          {"signal_scale", c.signal_scale},
          {"eps_geo", c.eps_geo},
          {"input_w", c.input_w},
          {"input_h", c.input_h},
          {"stem_stride", c.stem_stride},
          {"pyramid_levels", c.pyramid_levels},
          {"sampling_ratio", c.sampling_ratio},
          {"hidden", c.hidden},
          {"text_vocab", c.text_vocab},
          {"box_freqs", c.box_freqs},
          {"slot_embedding", c.slot_embedding}};
}

/// Missing keys keep their defaults, so partial config files are accepted.
inline ModelConfig modelConfigFromJson(const nlohmann::json& j, ModelConfig c = {}) {
  c.N = j.value("N", c.N);
  c.D_n = j.value("D_n", c.D_n);
  c.d = j.value("d", c.d);
  c.C = j.value("C", c.C);
  c.Wr = j.value("Wr", c.Wr);
  c.Hr = j.value("Hr", c.Hr);
  c.d_h = j.value("d_h", c.d_h);
  c.d_t = j.value("d_t", c.d_t);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.T = j.value("T", c.T);
  c.signal_scale = j.value("signal_scale", c.signal_scale);
  c.eps_geo = j.value("eps_geo", c.eps_geo);
  c.input_w = j.value("input_w", c.input_w);
  c.input_h = j.value("input_h", c.input_h);
  c.stem_stride = j.value("stem_stride", c.stem_stride);
  c.pyramid_levels = j.value("pyramid_levels", c.pyramid_levels);
  c.sampling_ratio = j.value("sampling_ratio", c.sampling_ratio);
  c.hidden = j.value("hidden", c.hidden);
  c.text_vocab = j.value("text_vocab", c.text_vocab);
  c.box_freqs = j.value("box_freqs", c.box_freqs);
  c.slot_embedding = j.value("slot_embedding", c.slot_embedding);
  return c;
}

inline nlohmann::json toJson(const AblationFlags& f) { return {{"use_vtram", f.use_vtram}, {"use_gram", f.use_gram}}; }

inline AblationFlags flagsFromJson(const nlohmann::json& j) {
  return {j.value("use_vtram", true), j.value("use_gram", true)};
}

inline nlohmann::json toJson(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"seed", c.seed},
          {"ablation", toJson(c.flags)},
          {"max_steps", c.max_steps},
          {"schedule", scheduleName(c.schedule)}};
}

inline TrainConfig trainConfigFromJson(const nlohmann::json& j, TrainConfig c = {}) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("ablation")) c.flags = flagsFromJson(j["ablation"]);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.schedule = parseSchedule(j.value("schedule", scheduleName(c.schedule)));
  return c;
}

}  // namespace radm
