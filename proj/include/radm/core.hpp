#pragma once

// Domain types shared by every stage of the layout pipeline: boxes,
// elements, layouts, poster samples and the model configuration.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "radm/raster.hpp"

namespace radm {

/// Smallest width/height a valid box may have (normalized units).
inline constexpr double kMinBoxSize = 1e-3;

/// Normalized center-format box: all four fields are fractions of the canvas.
struct BBox {
  double cx = 0.5;
  double cy = 0.5;
  double w = 1.0;
  double h = 1.0;

  double area() const { return w * h; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Corners {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  friend bool operator==(const Corners&, const Corners&) = default;
};

inline Corners toCorners(const BBox& b) {
  return {b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2};
}

inline BBox fromCorners(const Corners& c) {
  return {(c.x1 + c.x2) / 2, (c.y1 + c.y2) / 2, c.x2 - c.x1, c.y2 - c.y1};
}

inline bool isValidBox(const BBox& b) {
  constexpr double tol = 1e-12;
  return std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) && std::isfinite(b.h) &&
         b.w >= kMinBoxSize && b.h >= kMinBoxSize && b.w <= 1.0 + tol && b.h <= 1.0 + tol &&
         b.cx - b.w / 2 >= -tol && b.cx + b.w / 2 <= 1.0 + tol && b.cy - b.h / 2 >= -tol &&
         b.cy + b.h / 2 <= 1.0 + tol;
}

namespace detail {
// Clamps one axis given its (center, extent); returns the new pair.
inline std::pair<double, double> clampAxis(double c, double e) {
  double lo = std::clamp(c - e / 2, 0.0, 1.0);
  double hi = std::clamp(c + e / 2, 0.0, 1.0);
  if (std::isnan(lo) || std::isnan(hi)) return {0.5, kMinBoxSize};
  double extent = hi - lo;
  double center = (lo + hi) / 2;
  if (!(extent >= kMinBoxSize)) {
    extent = kMinBoxSize;
    center = std::clamp(center, kMinBoxSize / 2, 1.0 - kMinBoxSize / 2);
  }
  return {center, extent};
}
}  // namespace detail

/// Clamps corners into the unit square and floors w/h at kMinBoxSize.
/// Valid boxes are returned unchanged, which makes the operation idempotent.
inline BBox clampBox(const BBox& b) {
  if (isValidBox(b)) return b;
  auto [cx, w] = detail::clampAxis(b.cx, b.w);
  auto [cy, h] = detail::clampAxis(b.cy, b.h);
  return {cx, cy, w, h};
}

inline double intersectionArea(const BBox& a, const BBox& b) {
  const Corners p = toCorners(a), q = toCorners(b);
  const double iw = std::min(p.x2, q.x2) - std::max(p.x1, q.x1);
  const double ih = std::min(p.y2, q.y2) - std::max(p.y1, q.y1);
  return (iw > 0 && ih > 0) ? iw * ih : 0.0;
}

/// Area measured between the box's corners, consistent with intersectionArea.
inline double cornerArea(const BBox& b) {
  const Corners c = toCorners(b);
  return (c.x2 - c.x1) * (c.y2 - c.y1);
}

inline double iou(const BBox& a, const BBox& b) {
  const double inter = intersectionArea(a, b);
  const double uni = cornerArea(a) + cornerArea(b) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Pixel index range [x0, x1) x [y0, y1) whose pixel centers fall in the
/// half-open box [x1, x2) x [y1, y2) on a w x h raster.
struct PixelSpan {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int count() const { return std::max(0, x1 - x0) * std::max(0, y1 - y0); }
};

inline PixelSpan boxPixelSpan(const BBox& b, int w, int h) {
  const Corners c = toCorners(b);
  auto first = [](double v, int n) { return std::clamp(static_cast<int>(std::ceil(v * n - 0.5)), 0, n); };
  return {first(c.x1, w), first(c.y1, h), first(c.x2, w), first(c.y2, h)};
}

enum class ElementClass : int { Logo = 0, Text = 1, Underlay = 2, Embellishment = 3, Background = 4 };

inline constexpr int kNumClasses = 5;

inline std::string_view className(ElementClass c) {
  switch (c) {
    case ElementClass::Logo: return "logo";
    case ElementClass::Text: return "text";
    case ElementClass::Underlay: return "underlay";
    case ElementClass::Embellishment: return "embellishment";
    case ElementClass::Background: return "background";
  }
  return "background";
}

/// Parses a lowercase class name. BACKGROUND is not accepted unless allowed.
inline ElementClass parseClass(std::string_view name, bool allow_background = false) {
  if (name == "logo") return ElementClass::Logo;
  if (name == "text") return ElementClass::Text;
  if (name == "underlay") return ElementClass::Underlay;
  if (name == "embellishment") return ElementClass::Embellishment;
  if (allow_background && name == "background") return ElementClass::Background;
  throw std::invalid_argument("unknown element class '" + std::string(name) + "'");
}

struct Element {
  BBox box;
  ElementClass cls = ElementClass::Text;
  double score = 1.0;
  friend bool operator==(const Element&, const Element&) = default;
};

struct Layout {
  std::vector<Element> elements;
  int canvas_w = 1;
  int canvas_h = 1;

  std::size_t count(ElementClass c) const {
    return static_cast<std::size_t>(
        std::count_if(elements.begin(), elements.end(), [c](const Element& e) { return e.cls == c; }));
  }
  friend bool operator==(const Layout&, const Layout&) = default;
};

/// One poster: background, saliency, slogans and the ground-truth layout.
/// The k-th TEXT element of `gt` (in list order) carries slogan k.
struct PosterSample {
  std::string id;
  Raster image;
  Raster saliency;
  std::vector<std::string> slogans;
  Layout gt;
  std::string image_path;
  std::string saliency_path;
};

struct ModelConfig {
  int N = 16;        // query boxes per sample
  int D_n = 8;       // max slogans
  int d = 64;        // text feature width (content 3d/4 + length d/4)
  int C = 64;        // RoI channels
  int Wr = 7;        // RoI width
  int Hr = 7;        // RoI height
  int d_h = 64;      // geometry embedding width
  int d_t = 256;     // geometry feature width
  int num_classes = kNumClasses;
  int T = 1000;
  double signal_scale = 1.0;
  double eps_geo = 1e-3;

  int input_w = 384;
  int input_h = 600;
  int stem_stride = 8;
  int pyramid_levels = 3;
  int sampling_ratio = 2;
  int hidden = 256;
  int text_vocab = 4096;
  int box_freqs = 4;
  bool slot_embedding = true;

  int rois() const { return Wr * Hr; }
  int content_dim() const { return d - d / 4; }
  int length_dim() const { return d / 4; }

  /// Width of the decoder's fused per-RoI input.
  int fused_dim() const {
    return 2 * C * rois() + d_t + 4 + 8 * box_freqs + (slot_embedding ? N : 0);
  }

  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("invalid ModelConfig: ") + what);
    };
    need(N > 0 && D_n > 0 && d > 0 && C > 0 && Wr > 0 && Hr > 0 && d_t > 0 && T > 0, "all dims must be > 0");
    need(d_h > 0 && d_h % 8 == 0, "d_h must be a positive multiple of 8");
    need(d % 4 == 0 && (d / 4) % 2 == 0, "d must be a multiple of 8");
    need(num_classes == kNumClasses, "num_classes must be 5");
    need(signal_scale > 0, "signal_scale must be positive");
    need(eps_geo > 0, "eps_geo must be positive");
    need(input_w >= stem_stride && input_h >= stem_stride && stem_stride > 0, "input smaller than stem stride");
    need(pyramid_levels >= 2 && pyramid_levels <= 4, "pyramid_levels must be in [2,4]");
    need(sampling_ratio > 0 && hidden > 0 && text_vocab > 0 && box_freqs > 0, "sampler/decoder sizes must be > 0");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Settings that fit a 32-sample overfit run on one CPU core in well under a minute.
inline ModelConfig deskConfig() {
  ModelConfig c;
  c.N = 8;
  c.D_n = 4;
  c.d = 32;
  c.C = 16;
  c.Wr = 3;
  c.Hr = 3;
  c.d_t = 32;
  c.input_w = 96;
  c.input_h = 150;
  c.stem_stride = 4;
  c.hidden = 256;
  c.text_vocab = 1024;
  return c;
}

}  // namespace radm
