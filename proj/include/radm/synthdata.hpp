#pragma once

// Procedural posters whose layouts carry learnable structure: texts avoid
// salient blobs, text width grows with slogan length, underlays sit exactly
// under a text. Also an adapter for COCO-style CGL annotation files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "radm/core.hpp"
#include "radm/raster.hpp"
#include "radm/serialization.hpp"
#include "radm/tensor.hpp"

namespace radm {

struct SynthSpec {
  int count = 512;
  std::uint64_t seed = 0;
  int canvas_w = 192;
  int canvas_h = 300;
  int blobs_min = 1, blobs_max = 3;
  int texts_min = 1, texts_max = 3;
  double underlay_prob = 0.5;
  double embellish_prob = 0.3;

  void validate() const {
    if (count < 0) throw std::invalid_argument("SynthSpec: count must be >= 0");
    if (canvas_w < 8 || canvas_h < 8) throw std::invalid_argument("SynthSpec: canvas too small");
    if (blobs_min < 1 || blobs_max < blobs_min) throw std::invalid_argument("SynthSpec: empty blob range");
    if (texts_min < 1 || texts_max < texts_min) throw std::invalid_argument("SynthSpec: empty text range");
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(underlay_prob) || !prob(embellish_prob))
      throw std::invalid_argument("SynthSpec: probabilities must lie in [0,1]");
  }
};

/// Text width as a function of slogan length: 4 chars -> 0.15, 40 chars -> 0.8.
inline constexpr double kTextWidthPerChar = 0.65 / 36.0;
inline constexpr double kTextWidthBase = 0.15 - 4 * kTextWidthPerChar;
inline constexpr int kSloganMinChars = 4;
inline constexpr int kSloganMaxChars = 40;

inline double textWidthForLength(int chars) { return kTextWidthBase + kTextWidthPerChar * chars; }

/// Summed-area table over a single-channel raster for O(1) box means.
class IntegralImage {
 public:
  explicit IntegralImage(const Raster& r) : w_(r.width), h_(r.height), s_((w_ + 1) * (h_ + 1), 0.0) {
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x)
        s_[idx(x + 1, y + 1)] = r.at(x, y) + s_[idx(x, y + 1)] + s_[idx(x + 1, y)] - s_[idx(x, y)];
  }

  double mean(const BBox& b) const {
    const auto [x0, y0, x1, y1] = boxPixelSpan(b, w_, h_);
    const int n = std::max(0, x1 - x0) * std::max(0, y1 - y0);
    if (n == 0) return 0.0;
    return (s_[idx(x1, y1)] - s_[idx(x0, y1)] - s_[idx(x1, y0)] + s_[idx(x0, y0)]) / n;
  }

 private:
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * (w_ + 1) + x; }
  int w_, h_;
  std::vector<double> s_;
};

namespace detail {

inline std::string randomSlogan(Rng& rng, int chars) {
  static constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ne", "su", "ta", "ri", "po", "ve", "da",
                                               "zo", "hu", "fi", "ga", "be", "no", "xi", "ya", "ru", "me"};
  std::uniform_int_distribution<int> syl(0, 19), word_len(1, 4);
  std::string out;
  while (static_cast<int>(out.size()) < chars) {
    if (!out.empty()) out.push_back(' ');
    const int n = word_len(rng);
    for (int k = 0; k < n; ++k) out += kSyllables[syl(rng)];
  }
  out.resize(static_cast<std::size_t>(chars));
  if (out.back() == ' ') out.back() = 'a';
  return out;
}

inline bool overlapsAny(const BBox& b, const std::vector<BBox>& others, double margin) {
  const BBox grown{b.cx, b.cy, b.w + 2 * margin, b.h + 2 * margin};
  return std::any_of(others.begin(), others.end(), [&](const BBox& o) { return intersectionArea(grown, o) > 0; });
}

inline std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t index, std::uint64_t attempt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1) + 0xBF58476D1CE4E5B9ull * (attempt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// One attempt at a sample; std::nullopt when placement fails.
inline std::optional<PosterSample> tryGenerate(const SynthSpec& spec, Rng& rng, const std::string& id) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u(rng); };
  const int W = spec.canvas_w, H = spec.canvas_h;

  PosterSample s;
  s.id = id;
  s.image = Raster(W, H, 3);
  s.saliency = Raster(W, H, 1);

  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = uni(0.35, 0.9);
    c1[c] = uni(0.35, 0.9);
  }
  const double theta = uni(0.0, 2 * 3.14159265358979323846);
  const double dx = std::cos(theta), dy = std::sin(theta);

  struct Blob {
    double cx, cy, sx, sy, color[3];
  };
  std::vector<Blob> blobs(static_cast<std::size_t>(std::uniform_int_distribution<int>(spec.blobs_min, spec.blobs_max)(rng)));
  for (auto& b : blobs) {
    b.cx = uni(0.2, 0.8);
    b.cy = uni(0.3, 0.85);
    b.sx = uni(0.07, 0.14);
    b.sy = uni(0.05, 0.1);
    const int hot = std::uniform_int_distribution<int>(0, 2)(rng);
    for (int c = 0; c < 3; ++c) b.color[c] = c == hot ? uni(0.85, 1.0) : uni(0.0, 0.25);
  }

  double sal_max = 0.0;
  std::vector<double> sal(static_cast<std::size_t>(W) * H, 0.0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double nx = (x + 0.5) / W, ny = (y + 0.5) / H;
      const double g = std::clamp(0.5 + 0.5 * ((nx - 0.5) * dx + (ny - 0.5) * dy) * 1.4, 0.0, 1.0);
      double px[3];
      for (int c = 0; c < 3; ++c) px[c] = c0[c] * (1 - g) + c1[c] * g;
      double smax = 0.0;
      for (const auto& b : blobs) {
        const double ex = (nx - b.cx) / b.sx, ey = (ny - b.cy) / b.sy;
        const double a = std::exp(-0.5 * (ex * ex + ey * ey));
        for (int c = 0; c < 3; ++c) px[c] = px[c] * (1 - a) + b.color[c] * a;
        smax = std::max(smax, a);
      }
      for (int c = 0; c < 3; ++c) s.image.at(x, y, c) = static_cast<float>(px[c]);
      sal[static_cast<std::size_t>(y) * W + x] = smax;
      sal_max = std::max(sal_max, smax);
    }
  for (std::size_t k = 0; k < sal.size(); ++k)
    s.saliency.data[k] = static_cast<float>(sal_max > 0 ? sal[k] / sal_max : 0.0);
  quantize8(s.image);
  quantize8(s.saliency);
  const IntegralImage integral(s.saliency);

  constexpr double kMaxTextSaliency = 0.12;
  constexpr int kTries = 200;
  std::vector<BBox> placed;

  // Logo in the top band.
  BBox logo{};
  bool ok = false;
  for (int t = 0; t < kTries && !ok; ++t) {
    const double w = uni(0.12, 0.25), h = uni(0.04, 0.07);
    logo = {uni(w / 2 + 0.02, 1 - w / 2 - 0.02), uni(0.02 + h / 2, 0.15), w, h};
    ok = integral.mean(logo) < kMaxTextSaliency;
  }
  if (!ok) return std::nullopt;
  placed.push_back(logo);

  const int ntext = std::uniform_int_distribution<int>(spec.texts_min, spec.texts_max)(rng);
  std::vector<BBox> texts;
  for (int k = 0; k < ntext; ++k) {
    const int chars = std::uniform_int_distribution<int>(kSloganMinChars, kSloganMaxChars)(rng);
    s.slogans.push_back(randomSlogan(rng, chars));
    const double w = std::clamp(textWidthForLength(chars), 0.1, 0.9);
    const double h = uni(0.04, 0.07);
    ok = false;
    BBox b{};
    for (int t = 0; t < kTries && !ok; ++t) {
      b = {uni(w / 2 + 0.02, 1 - w / 2 - 0.02), uni(0.2 + h / 2, 0.96 - h / 2), w, h};
      ok = integral.mean(b) < kMaxTextSaliency && !overlapsAny(b, placed, 0.015);
    }
    if (!ok) return std::nullopt;
    placed.push_back(b);
    texts.push_back(b);
  }

  Layout& gt = s.gt;
  gt.canvas_w = W;
  gt.canvas_h = H;
  for (const auto& b : texts) gt.elements.push_back({b, ElementClass::Text, 1.0});
  gt.elements.push_back({logo, ElementClass::Logo, 1.0});

  if (u(rng) < spec.underlay_prob) {
    const auto& t = texts[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, ntext - 1)(rng))];
    const double m = uni(0.005, 0.012);
    Corners c = toCorners(t);
    c = {std::max(0.0, c.x1 - m), std::max(0.0, c.y1 - m), std::min(1.0, c.x2 + m), std::min(1.0, c.y2 + m)};
    gt.elements.push_back({fromCorners(c), ElementClass::Underlay, 1.0});
  }
  if (u(rng) < spec.embellish_prob) {
    std::vector<BBox> occupied = placed;
    for (const auto& e : gt.elements) occupied.push_back(e.box);
    for (int t = 0; t < kTries; ++t) {
      const double w = uni(0.05, 0.1), h = uni(0.03, 0.06);
      const BBox b{uni(w / 2 + 0.01, 1 - w / 2 - 0.01), uni(h / 2 + 0.01, 1 - h / 2 - 0.01), w, h};
      if (integral.mean(b) < kMaxTextSaliency && !overlapsAny(b, occupied, 0.01)) {
        gt.elements.push_back({b, ElementClass::Embellishment, 1.0});
        break;
      }
    }
  }
  return s;
}

}  // namespace detail

/// Deterministic in `spec`: sample i uses its own sub-seed, and a failed
/// placement retries the sample with the next sub-seed.
inline std::vector<PosterSample> generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<PosterSample> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%05d", i);
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng(detail::mixSeed(spec.seed, static_cast<std::uint64_t>(i), attempt));
      if (auto s = detail::tryGenerate(spec, rng, id)) {
        out.push_back(std::move(*s));
        break;
      }
      if (attempt > 1000) throw std::runtime_error("generate: placement keeps failing for sample " + std::string(id));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CGL ingestion

enum class BoxFormat { XYXY, XYWH };

struct IngestOptions {
  BoxFormat format = BoxFormat::XYXY;
};

struct IngestIssue {
  std::string sample_id;
  std::string message;
};

struct IngestResult {
  std::vector<PosterSample> samples;
  std::vector<IngestIssue> errors;
  int missing_images = 0;
  int missing_saliency = 0;
};

inline ElementClass cglCategory(int id) {
  switch (id) {
    case 1: return ElementClass::Logo;
    case 2: return ElementClass::Text;
    case 3: return ElementClass::Underlay;
    case 4: return ElementClass::Embellishment;
    default: throw std::invalid_argument("unknown category id " + std::to_string(id));
  }
}

/// Reads a COCO-like file: {"images":[{"id","file_name","width","height","slogans"?}],
/// "annotations":[{"image_id","category_id","bbox":[...]}]}. Pixel boxes are
/// normalized by the image's canvas. Saliency is read from <stem>_sal.png next
/// to the image when present.
inline IngestResult ingestCGL(const std::filesystem::path& annotation_file, const std::filesystem::path& image_root,
                              const IngestOptions& opts = {}) {
  namespace fs = std::filesystem;
  const nlohmann::json doc = nlohmann::json::parse(readTextFile(annotation_file));
  IngestResult res;
  struct Pending {
    PosterSample sample;
    bool ok = true;
  };
  std::vector<Pending> pending;
  std::map<long long, std::size_t> by_id;
  for (const auto& rec : doc.at("images")) {
    Pending p;
    const fs::path file = rec.at("file_name").get<std::string>();
    p.sample.id = file.stem().string();
    p.sample.image_path = file.string();
    p.sample.gt.canvas_w = rec.value("width", 0);
    p.sample.gt.canvas_h = rec.value("height", 0);
    if (rec.contains("slogans")) p.sample.slogans = rec["slogans"].get<std::vector<std::string>>();
    else if (rec.contains("texts")) p.sample.slogans = rec["texts"].get<std::vector<std::string>>();
    const fs::path img = image_root / file;
    if (!fs::exists(img)) {
      ++res.missing_images;
      p.ok = false;
    } else {
      p.sample.image = readPng(img, 3);
      if (p.sample.gt.canvas_w <= 0) p.sample.gt.canvas_w = p.sample.image.width;
      if (p.sample.gt.canvas_h <= 0) p.sample.gt.canvas_h = p.sample.image.height;
      const fs::path sal = image_root / (p.sample.id + "_sal.png");
      if (fs::exists(sal)) {
        p.sample.saliency = readPng(sal, 1);
        p.sample.saliency_path = sal.filename().string();
      } else {
        ++res.missing_saliency;
        p.sample.saliency = Raster(p.sample.image.width, p.sample.image.height, 1, 0.0f);
      }
    }
    by_id[rec.at("id").get<long long>()] = pending.size();
    pending.push_back(std::move(p));
  }
  for (const auto& ann : doc.value("annotations", nlohmann::json::array())) {
    const auto it = by_id.find(ann.at("image_id").get<long long>());
    if (it == by_id.end()) {
      res.errors.push_back({"", "annotation refers to unknown image_id " + ann.at("image_id").dump()});
      continue;
    }
    Pending& p = pending[it->second];
    if (!p.ok) continue;
    try {
      const ElementClass cls = cglCategory(ann.at("category_id").get<int>());
      const auto& bb = ann.at("bbox");
      double x1 = bb.at(0).get<double>(), y1 = bb.at(1).get<double>();
      double x2 = bb.at(2).get<double>(), y2 = bb.at(3).get<double>();
      if (opts.format == BoxFormat::XYWH) {
        x2 += x1;
        y2 += y1;
      }
      const double W = p.sample.gt.canvas_w, H = p.sample.gt.canvas_h;
      p.sample.gt.elements.push_back({fromCorners({x1 / W, y1 / H, x2 / W, y2 / H}), cls, 1.0});
    } catch (const std::exception& e) {
      res.errors.push_back({p.sample.id, e.what()});
    }
  }
  for (auto& p : pending)
    if (p.ok) res.samples.push_back(std::move(p.sample));
  return res;
}

}  // namespace radm
