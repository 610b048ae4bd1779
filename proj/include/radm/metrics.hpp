#pragma once

// Graphic and composition layout metrics. Boxes are in normalized canvas
// coordinates; raster metrics count a pixel when its center lies in the box.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "radm/core.hpp"
#include "radm/raster.hpp"

namespace radm {

struct MetricsConfig {
  double tau_und = 0.9;
  double saliency_threshold = 0.5;
  double underlay_beneath = 0.5;
};

inline std::array<double, 6> alignmentAxes(const BBox& b) {
  const Corners c = toCorners(b);
  return {c.x1, b.cx, c.x2, c.y1, b.cy, c.y2};
}

/// Mean over elements of the smallest axis distance to any other element.
inline double alignment(const Layout& layout) {
  const auto& el = layout.elements;
  if (el.size() < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < el.size(); ++i) {
    const auto a = alignmentAxes(el[i].box);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < el.size(); ++j) {
      if (j == i) continue;
      const auto b = alignmentAxes(el[j].box);
      for (int k = 0; k < 6; ++k) best = std::min(best, std::abs(a[k] - b[k]));
    }
    sum += best;
  }
  return sum / static_cast<double>(el.size());
}

/// Mean pairwise IoU among LOGO and TEXT elements.
inline double overlap(const Layout& layout) {
  std::vector<BBox> boxes;
  for (const auto& e : layout.elements)
    if (e.cls == ElementClass::Logo || e.cls == ElementClass::Text) boxes.push_back(e.box);
  if (boxes.size() < 2) return 0.0;
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = i + 1; j < boxes.size(); ++j, ++pairs) sum += iou(boxes[i], boxes[j]);
  return sum / static_cast<double>(pairs);
}

/// Per-underlay coverage: max over non-underlay elements of area(e ∩ u) / area(e).
inline std::vector<double> underlayCoverages(const Layout& layout) {
  std::vector<double> out;
  for (const auto& u : layout.elements) {
    if (u.cls != ElementClass::Underlay) continue;
    double best = 0.0;
    for (const auto& e : layout.elements) {
      if (e.cls == ElementClass::Underlay || cornerArea(e.box) <= 0) continue;
      best = std::max(best, intersectionArea(e.box, u.box) / cornerArea(e.box));
    }
    out.push_back(std::min(best, 1.0));
  }
  return out;
}

inline double underlayValidity(const Layout& layout) {
  const auto cov = underlayCoverages(layout);
  if (cov.empty()) return 0.0;
  double s = 0.0;
  for (double c : cov) s += c;
  return s / static_cast<double>(cov.size());
}

/// Fraction of underlays whose coverage reaches tau.
inline double validUnderlayFraction(const Layout& layout, double tau = 0.9) {
  const auto cov = underlayCoverages(layout);
  if (cov.empty()) return 0.0;
  return static_cast<double>(std::count_if(cov.begin(), cov.end(), [tau](double c) { return c >= tau; })) /
         static_cast<double>(cov.size());
}

inline double occupancy(std::span<const Layout> layouts) {
  if (layouts.empty()) throw std::invalid_argument("occupancy: empty layout list");
  const auto non_empty =
      std::count_if(layouts.begin(), layouts.end(), [](const Layout& l) { return !l.elements.empty(); });
  return static_cast<double>(non_empty) / static_cast<double>(layouts.size());
}

/// Union mask (row-major w*h) of the given boxes.
inline std::vector<char> boxMask(const std::vector<BBox>& boxes, int w, int h) {
  std::vector<char> mask(static_cast<std::size_t>(w) * h, 0);
  for (const auto& b : boxes) {
    const PixelSpan s = boxPixelSpan(b, w, h);
    for (int y = s.y0; y < s.y1; ++y)
      for (int x = s.x0; x < s.x1; ++x) mask[static_cast<std::size_t>(y) * w + x] = 1;
  }
  return mask;
}

/// TEXT boxes that have no underlay beneath them.
inline std::vector<BBox> uncoveredTexts(const Layout& layout, double beneath = 0.5) {
  std::vector<BBox> out;
  for (const auto& t : layout.elements) {
    if (t.cls != ElementClass::Text) continue;
    bool covered = false;
    for (const auto& u : layout.elements)
      if (u.cls == ElementClass::Underlay && cornerArea(t.box) > 0 &&
          intersectionArea(t.box, u.box) / cornerArea(t.box) >= beneath)
        covered = true;
    if (!covered) out.push_back(t.box);
  }
  return out;
}

/// Readability from a precomputed gradient-magnitude raster; std::nullopt when
/// no uncovered text touches a pixel.
inline std::optional<double> readabilityFromGradient(const Layout& layout, const Raster& grad, double beneath = 0.5) {
  const auto mask = boxMask(uncoveredTexts(layout, beneath), grad.width, grad.height);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < mask.size(); ++k)
    if (mask[k]) {
      sum += grad.data[k];
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

namespace detail {
inline void checkCanvas(const Layout& layout, const Raster& r, const char* what) {
  if (r.empty()) throw std::invalid_argument(std::string(what) + ": empty raster");
  if (r.width != layout.canvas_w || r.height != layout.canvas_h)
    throw std::invalid_argument(std::string(what) + ": raster " + std::to_string(r.width) + "x" +
                                std::to_string(r.height) + " does not match canvas " +
                                std::to_string(layout.canvas_w) + "x" + std::to_string(layout.canvas_h));
}
}  // namespace detail

/// Mean Sobel magnitude of the grayscale image inside uncovered TEXT boxes; 0 if none.
inline double readability(const Layout& layout, const Raster& image, double beneath = 0.5) {
  detail::checkCanvas(layout, image, "readability");
  return readabilityFromGradient(layout, sobelMagnitude(toGray(image)), beneath).value_or(0.0);
}

struct Occlusion {
  double r_shm = 0.0;
  double r_sub = 0.0;
};

inline Occlusion subjectOcclusion(const Layout& layout, const Raster& saliency, double threshold = 0.5) {
  detail::checkCanvas(layout, saliency, "subjectOcclusion");
  std::vector<BBox> boxes;
  for (const auto& e : layout.elements) boxes.push_back(e.box);
  const auto mask = boxMask(boxes, saliency.width, saliency.height);
  double sal_in = 0.0;
  std::size_t n_in = 0, salient = 0, salient_in = 0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const double v = saliency.data[k * static_cast<std::size_t>(saliency.channels)];
    const bool is_salient = v >= threshold;
    salient += is_salient;
    if (mask[k]) {
      sal_in += v;
      ++n_in;
      salient_in += is_salient;
    }
  }
  Occlusion o;
  o.r_shm = n_in ? sal_in / static_cast<double>(n_in) : 0.0;
  o.r_sub = salient ? static_cast<double>(salient_in) / static_cast<double>(salient) : 0.0;
  return o;
}

/// Per-layout breakdown. r_und / r_com are absent when the layout has no
/// underlay / no uncovered text.
struct LayoutMetrics {
  std::string id;
  std::size_t elements = 0;
  double r_ali = 0, r_ove = 0;
  std::optional<double> r_und, valid_und, r_com;
  double r_shm = 0, r_sub = 0;
};

struct MetricsReport {
  double r_ali = 0, r_ove = 0, r_und = 0, r_occ = 0, r_com = 0, r_shm = 0, r_sub = 0;
  double valid_underlay = 0;
  std::size_t layouts = 0;
  std::size_t with_underlay = 0;
  std::size_t with_open_text = 0;
};

inline LayoutMetrics layoutMetrics(const Layout& layout, const Raster& image, const Raster& saliency,
                                   const MetricsConfig& cfg = {}, std::string id = {}) {
  LayoutMetrics m;
  m.id = std::move(id);
  m.elements = layout.elements.size();
  m.r_ali = alignment(layout);
  m.r_ove = overlap(layout);
  if (layout.count(ElementClass::Underlay) > 0) {
    m.r_und = underlayValidity(layout);
    m.valid_und = validUnderlayFraction(layout, cfg.tau_und);
  }
  detail::checkCanvas(layout, image, "readability");
  m.r_com = readabilityFromGradient(layout, sobelMagnitude(toGray(image)), cfg.underlay_beneath);
  const Occlusion o = subjectOcclusion(layout, saliency, cfg.saliency_threshold);
  m.r_shm = o.r_shm;
  m.r_sub = o.r_sub;
  return m;
}

/// Dataset means. r_und and r_com average only over layouts where they are defined.
inline MetricsReport aggregate(std::span<const LayoutMetrics> per) {
  if (per.empty()) throw std::invalid_argument("aggregate: no layouts");
  MetricsReport r;
  r.layouts = per.size();
  std::size_t non_empty = 0;
  double und = 0, valid = 0, com = 0;
  for (const auto& m : per) {
    r.r_ali += m.r_ali;
    r.r_ove += m.r_ove;
    r.r_shm += m.r_shm;
    r.r_sub += m.r_sub;
    non_empty += m.elements > 0;
    if (m.r_und) {
      und += *m.r_und;
      valid += *m.valid_und;
      ++r.with_underlay;
    }
    if (m.r_com) {
      com += *m.r_com;
      ++r.with_open_text;
    }
  }
  const double n = static_cast<double>(per.size());
  r.r_ali /= n;
  r.r_ove /= n;
  r.r_shm /= n;
  r.r_sub /= n;
  r.r_occ = static_cast<double>(non_empty) / n;
  if (r.with_underlay) {
    r.r_und = und / static_cast<double>(r.with_underlay);
    r.valid_underlay = valid / static_cast<double>(r.with_underlay);
  }
  if (r.with_open_text) r.r_com = com / static_cast<double>(r.with_open_text);
  return r;
}

/// Evaluates layouts[i] against samples[i]'s image and saliency.
inline std::vector<LayoutMetrics> evaluateLayouts(std::span<const PosterSample> samples, std::span<const Layout> layouts,
                                                  const MetricsConfig& cfg = {}) {
  if (samples.size() != layouts.size())
    throw std::invalid_argument("evaluate: " + std::to_string(layouts.size()) + " layouts for " +
                                std::to_string(samples.size()) + " samples");
  std::vector<LayoutMetrics> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Layout l = layouts[i];
    l.canvas_w = samples[i].image.width;
    l.canvas_h = samples[i].image.height;
    out.push_back(layoutMetrics(l, samples[i].image, samples[i].saliency, cfg, samples[i].id));
  }
  return out;
}

inline nlohmann::json toJson(const MetricsReport& r) {
  return {{"r_ali", r.r_ali},       {"r_ove", r.r_ove},         {"r_und", r.r_und},
          {"r_occ", r.r_occ},       {"r_com", r.r_com},         {"r_shm", r.r_shm},
          {"r_sub", r.r_sub},       {"valid_underlay", r.valid_underlay}, {"layouts", r.layouts},
          {"with_underlay", r.with_underlay}, {"with_open_text", r.with_open_text}};
}

inline nlohmann::json toJson(const LayoutMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"id", m.id},       {"elements", m.elements}, {"r_ali", m.r_ali}, {"r_ove", m.r_ove},
          {"r_und", opt(m.r_und)}, {"r_com", opt(m.r_com)},  {"r_shm", m.r_shm}, {"r_sub", m.r_sub}};
}

inline constexpr const char* kReportCsvHeader = "r_ali,r_ove,r_und,r_occ,r_com,r_shm,r_sub,valid_underlay,layouts";

inline std::string csvRow(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(9);
  os << r.r_ali << ',' << r.r_ove << ',' << r.r_und << ',' << r.r_occ << ',' << r.r_com << ',' << r.r_shm << ','
     << r.r_sub << ',' << r.valid_underlay << ',' << r.layouts;
  return os.str();
}

inline std::string perSampleCsv(std::span<const LayoutMetrics> per) {
  std::ostringstream os;
  os.precision(9);
  os << "id,elements,r_ali,r_ove,r_und,r_com,r_shm,r_sub\n";
  auto opt = [](const std::optional<double>& v) {
    std::ostringstream s;
    s.precision(9);
    if (v) s << *v;
    return s.str();
  };
  for (const auto& m : per)
    os << m.id << ',' << m.elements << ',' << m.r_ali << ',' << m.r_ove << ',' << opt(m.r_und) << ',' << opt(m.r_com)
       << ',' << m.r_shm << ',' << m.r_sub << '\n';
  return os.str();
}

}  // namespace radm
