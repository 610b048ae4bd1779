#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "radm/core.hpp"
#include "radm/raster.hpp"

namespace radm {

inline std::array<float, 3> classColor(ElementClass c) {
  switch (c) {
    case ElementClass::Logo: return {0.90f, 0.22f, 0.27f};
    case ElementClass::Text: return {0.11f, 0.45f, 0.85f};
    case ElementClass::Underlay: return {0.98f, 0.75f, 0.15f};
    case ElementClass::Embellishment: return {0.30f, 0.75f, 0.35f};
    case ElementClass::Background: return {0.5f, 0.5f, 0.5f};
  }
  return {0.5f, 0.5f, 0.5f};
}

/// Draw order: underlays first, texts last.
inline int zOrder(ElementClass c) {
  switch (c) {
    case ElementClass::Underlay: return 0;
    case ElementClass::Embellishment: return 1;
    case ElementClass::Logo: return 2;
    case ElementClass::Text: return 3;
    case ElementClass::Background: return -1;
  }
  return -1;
}

struct RenderStyle {
  float fill_alpha = 0.3f;
  int stroke = 2;
};

/// Overlays class-colored translucent boxes with solid outlines on an RGB copy of `image`.
inline Raster renderLayout(const Layout& layout, const Raster& image, const RenderStyle& style = {}) {
  if (layout.elements.empty()) return image;
  Raster out(image.width, image.height, 3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = image.at(x, y, image.channels == 3 ? c : 0);

  std::vector<const Element*> order;
  for (const auto& e : layout.elements)
    if (zOrder(e.cls) >= 0) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(),
                   [](const Element* a, const Element* b) { return zOrder(a->cls) < zOrder(b->cls); });

  for (const Element* e : order) {
    const auto col = classColor(e->cls);
    const PixelSpan s = boxPixelSpan(clampBox(e->box), out.width, out.height);
    for (int y = s.y0; y < s.y1; ++y)
      for (int x = s.x0; x < s.x1; ++x) {
        const bool edge =
            x < s.x0 + style.stroke || x >= s.x1 - style.stroke || y < s.y0 + style.stroke || y >= s.y1 - style.stroke;
        const float a = edge ? 1.0f : style.fill_alpha;
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = out.at(x, y, c) * (1 - a) + col[static_cast<std::size_t>(c)] * a;
      }
  }
  quantize8(out);
  return out;
}

}  // namespace radm
