#pragma once

// End-to-end helpers: batch generation over a dataset, layout matching
// against ground truth, and ablation runs.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "radm/diffusion.hpp"
#include "radm/metrics.hpp"
#include "radm/model.hpp"
#include "radm/training.hpp"

namespace radm {

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (pred, gt)
  std::vector<double> ious;
  double mean_iou = 0.0;  // sum of matched IoU / max(#pred, #gt)
};

/// Class-agnostic greedy matching: repeatedly takes the highest-IoU unmatched pair.
inline MatchResult greedyMatch(const std::vector<BBox>& pred, const std::vector<BBox>& gt) {
  MatchResult r;
  if (pred.empty() && gt.empty()) {
    r.mean_iou = 1.0;
    return r;
  }
  struct Cand {
    double iou;
    std::size_t p, g;
  };
  std::vector<Cand> cands;
  for (std::size_t p = 0; p < pred.size(); ++p)
    for (std::size_t g = 0; g < gt.size(); ++g) cands.push_back({iou(pred[p], gt[g]), p, g});
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.iou > b.iou; });
  std::vector<char> used_p(pred.size(), 0), used_g(gt.size(), 0);
  double sum = 0.0;
  for (const auto& c : cands) {
    if (used_p[c.p] || used_g[c.g]) continue;
    used_p[c.p] = used_g[c.g] = 1;
    r.pairs.emplace_back(c.p, c.g);
    r.ious.push_back(c.iou);
    sum += c.iou;
  }
  r.mean_iou = sum / static_cast<double>(std::max(pred.size(), gt.size()));
  return r;
}

inline std::vector<BBox> boxesOf(const Layout& l) {
  std::vector<BBox> out;
  for (const auto& e : l.elements) out.push_back(e.box);
  return out;
}

/// One layout per sample, conditioned on the sample's slogans; sample i uses seed + i.
template <Denoiser D>
std::vector<Layout> generateForDataset(const D& model, std::span<const PosterSample> samples,
                                       const DiffusionSchedule& sched, const SamplerOptions& opts, std::uint64_t seed) {
  std::vector<Layout> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    GenerationConstraints c;
    c.slogans = samples[i].slogans;
    c.seed = seed + i;
    out.push_back(sample(model, samples[i].image, c, sched, opts).layout);
  }
  return out;
}

inline AblationFlags parseVariant(const std::string& name) {
  if (name == "full") return {true, true};
  if (name == "no-gram") return {true, false};
  if (name == "no-vtram") return {false, true};
  if (name == "no-vtram-no-gram") return {false, false};
  throw std::invalid_argument("unknown variant '" + name + "' (full, no-gram, no-vtram, no-vtram-no-gram)");
}

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  MetricsReport report;
};

struct AblationOptions {
  std::vector<AblationFlags> variants = {{true, true}, {true, false}, {false, true}};
  std::vector<std::uint64_t> seeds = {0};
  SamplerOptions sampler;
  MetricsConfig metrics;
};

/// Trains every (variant, seed) on `data` with otherwise identical settings and
/// evaluates its generations on the same data.
inline std::vector<AblationRow> runAblation(const std::vector<PosterSample>& data, const ModelConfig& mcfg,
                                            const TrainConfig& base, const AblationOptions& opts,
                                            const std::function<void(const AblationRow&)>& on_row = {}) {
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : opts.seeds)
    for (const auto& flags : opts.variants) {
      TrainConfig tc = base;
      tc.flags = flags;
      tc.seed = seed;
      Trainer trainer(mcfg, tc, data);
      LossBreakdown last;
      trainer.run([&](long long, const LossBreakdown& lb) { last = lb; });
      const auto layouts =
          generateForDataset(trainer.model(), std::span<const PosterSample>(data), trainer.schedule(), opts.sampler, seed);
      const auto per = evaluateLayouts(data, layouts, opts.metrics);
      AblationRow row{variantName(flags), seed, last.total, aggregate(per)};
      if (on_row) on_row(row);
      rows.push_back(std::move(row));
    }
  return rows;
}

inline std::string ablationCsv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  os << "variant,seed,final_loss," << kReportCsvHeader << '\n';
  for (const auto& r : rows) os << r.variant << ',' << r.seed << ',' << r.final_loss << ',' << csvRow(r.report) << '\n';
  return os.str();
}

}  // namespace radm
