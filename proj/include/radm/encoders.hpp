#pragma once

// Image pyramid encoder, RoI pooling over the pyramid, and the hashed
// bag-of-tokens text encoder with a sinusoidal length embedding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "radm/core.hpp"
#include "radm/raster.hpp"
#include "radm/tensor.hpp"

namespace radm {

// ---------------------------------------------------------------------------
// Image side

/// Fixed (non-learned) input to the image encoder: channels R, G, B and
/// Sobel magnitude, average-pooled by `stem_stride`. Layout: 4 x (h*w).
template <class S>
struct StemInput {
  int height = 0;
  int width = 0;
  Mat<S> map;
};

template <class S>
struct FeatureLevel {
  int stride = 1;  // in resized-input pixels
  int height = 0;
  int width = 0;
  Mat<S> map;  // C x (height*width), column y*width + x
};

template <class S>
struct FeaturePyramid {
  std::vector<FeatureLevel<S>> levels;
  int channels() const { return levels.empty() ? 0 : static_cast<int>(levels.front().map.rows()); }
};

template <class S>
StemInput<S> prepareStem(const Raster& image, const ModelConfig& cfg) {
  if (image.empty()) throw std::invalid_argument("encodeImage: empty raster");
  Raster rgb = image;
  if (rgb.channels == 1) {
    Raster r(rgb.width, rgb.height, 3);
    for (std::size_t i = 0; i < rgb.data.size(); ++i)
      for (int c = 0; c < 3; ++c) r.data[i * 3 + c] = rgb.data[i];
    rgb = std::move(r);
  } else if (rgb.channels != 3) {
    throw std::invalid_argument("encodeImage: expected 1 or 3 channels");
  }
  const Raster resized = resizeBilinear(rgb, cfg.input_w, cfg.input_h);
  const Raster grad = sobelMagnitude(toGray(resized));
  StemInput<S> stem;
  const int k = cfg.stem_stride;
  stem.height = cfg.input_h / k;
  stem.width = cfg.input_w / k;
  stem.map = Mat<S>::Zero(4, stem.height * stem.width);
  const double norm = 1.0 / (k * k);
  for (int y = 0; y < stem.height; ++y)
    for (int x = 0; x < stem.width; ++x) {
      double acc[4] = {0, 0, 0, 0};
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          const int px = x * k + dx, py = y * k + dy;
          for (int c = 0; c < 3; ++c) acc[c] += resized.at(px, py, c);
          acc[3] += grad.at(px, py) / 8.0;
        }
      for (int c = 0; c < 4; ++c) stem.map(c, y * stem.width + x) = static_cast<S>(acc[c] * norm);
    }
  return stem;
}

/// Strided 3x3 convolutional pyramid: level 0 at the stem stride, each
/// further level halves the resolution. ReLU after every convolution.
template <class S>
class ImageEncoder {
 public:
  struct Cache {
    std::vector<Mat<S>> cols;
    std::vector<int> in_h, in_w;
  };

  ImageEncoder() = default;
  ImageEncoder(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    int in_ch = 4;
    for (int l = 0; l < cfg.pyramid_levels; ++l) {
      weights_.emplace_back("image.conv" + std::to_string(l) + ".weight", "encoder", cfg.C, in_ch * 9);
      biases_.emplace_back("image.conv" + std::to_string(l) + ".bias", "encoder", cfg.C, 1);
      initUniform(weights_.back(), rng, in_ch * 9.0, std::sqrt(2.0));
      in_ch = cfg.C;
    }
  }

  FeaturePyramid<S> forward(const StemInput<S>& stem, Cache* cache = nullptr) const {
    FeaturePyramid<S> pyr;
    const Mat<S>* in = &stem.map;
    int h = stem.height, w = stem.width;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const int stride = l == 0 ? 1 : 2;
      int ho = 0, wo = 0;
      Mat<S> cols = im2col3x3<S>(*in, h, w, stride, ho, wo);
      FeatureLevel<S> lvl;
      lvl.stride = cfg_.stem_stride << l;
      lvl.height = ho;
      lvl.width = wo;
      lvl.map = (weights_[l].value * cols).colwise() + biases_[l].value.col(0);
      lvl.map = lvl.map.cwiseMax(S(0));
      if (cache) {
        cache->cols.push_back(std::move(cols));
        cache->in_h.push_back(h);
        cache->in_w.push_back(w);
      }
      pyr.levels.push_back(std::move(lvl));
      in = &pyr.levels.back().map;
      h = ho;
      w = wo;
    }
    return pyr;
  }

  /// Accumulates parameter gradients given d(loss)/d(level maps). Consumes `dlevels`.
  void backward(const Cache& cache, const FeaturePyramid<S>& pyr, std::vector<Mat<S>>& dlevels) {
    for (std::size_t li = weights_.size(); li-- > 0;) {
      const auto& lvl = pyr.levels[li];
      const Mat<S> dpre = (lvl.map.array() > S(0)).select(dlevels[li], S(0));
      weights_[li].grad.noalias() += dpre * cache.cols[li].transpose();
      biases_[li].grad += dpre.rowwise().sum();
      if (li == 0) break;
      const Mat<S> dcols = weights_[li].value.transpose() * dpre;
      dlevels[li - 1] +=
          col2im3x3<S>(dcols, cfg_.C, cache.in_h[li], cache.in_w[li], 2, lvl.height, lvl.width);
    }
  }

  std::vector<Param<S>*> parameters() {
    std::vector<Param<S>*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    return out;
  }

 private:
  ModelConfig cfg_;
  std::vector<Param<S>> weights_;
  std::vector<Param<S>> biases_;
};

// ---------------------------------------------------------------------------
// RoI pooling

template <class S>
struct RoIFeature {
  Mat<S> data;  // C x (Hr*Wr), column by*Wr + bx
  BBox box;
  int level = 0;
};

/// Pyramid level for a box: clamp(floor(l0 + log2(sqrt(w*h))), 0, L-1), with
/// l0 = L - 0.5 so that a half-canvas box lands on the coarsest level.
inline int roiLevel(const BBox& b, int num_levels) {
  const double l0 = num_levels - 0.5;
  const int lvl = static_cast<int>(std::floor(l0 + std::log2(std::sqrt(b.w * b.h))));
  return std::clamp(lvl, 0, num_levels - 1);
}

namespace detail {

/// Visits every bilinear tap of an aligned RoIAlign over one feature map:
/// fn(bin, flat_index, weight) with weights already divided by the sample count.
template <class Fn>
void forEachRoiTap(int height, int width, const BBox& box, int wr, int hr, int ratio, Fn&& fn) {
  const Corners c = toCorners(box);
  const double x0 = c.x1 * width - 0.5, y0 = c.y1 * height - 0.5;
  const double bin_w = box.w * width / wr, bin_h = box.h * height / hr;
  const double norm = 1.0 / (ratio * ratio);
  for (int by = 0; by < hr; ++by)
    for (int bx = 0; bx < wr; ++bx) {
      const int bin = by * wr + bx;
      for (int sy = 0; sy < ratio; ++sy) {
        double y = y0 + by * bin_h + (sy + 0.5) * bin_h / ratio;
        for (int sx = 0; sx < ratio; ++sx) {
          double x = x0 + bx * bin_w + (sx + 0.5) * bin_w / ratio;
          if (y < -1.0 || y > height || x < -1.0 || x > width) continue;
          double yy = std::max(y, 0.0), xx = std::max(x, 0.0);
          int yl = static_cast<int>(yy), xl = static_cast<int>(xx);
          int yh, xh;
          if (yl >= height - 1) {
            yl = yh = height - 1;
            yy = yl;
          } else {
            yh = yl + 1;
          }
          if (xl >= width - 1) {
            xl = xh = width - 1;
            xx = xl;
          } else {
            xh = xl + 1;
          }
          const double ly = yy - yl, lx = xx - xl, hy = 1 - ly, hx = 1 - lx;
          fn(bin, yl * width + xl, hy * hx * norm);
          fn(bin, yl * width + xh, hy * lx * norm);
          fn(bin, yh * width + xl, ly * hx * norm);
          fn(bin, yh * width + xh, ly * lx * norm);
        }
      }
    }
}

}  // namespace detail

/// Bilinear RoIAlign of `box` on the level selected by its scale.
template <class S>
RoIFeature<S> roiPool(const FeaturePyramid<S>& pyr, const BBox& box, int wr, int hr, int ratio = 2) {
  if (!isValidBox(box)) throw std::logic_error("roiPool: box is not valid after clamping");
  RoIFeature<S> roi;
  roi.box = box;
  roi.level = roiLevel(box, static_cast<int>(pyr.levels.size()));
  const auto& lvl = pyr.levels[static_cast<std::size_t>(roi.level)];
  roi.data = Mat<S>::Zero(lvl.map.rows(), wr * hr);
  detail::forEachRoiTap(lvl.height, lvl.width, box, wr, hr, ratio, [&](int bin, int idx, double wgt) {
    roi.data.col(bin) += static_cast<S>(wgt) * lvl.map.col(idx);
  });
  return roi;
}

/// Adjoint of roiPool: scatters d(roi) into the matching level gradient.
template <class S>
void roiPoolBackward(const FeaturePyramid<S>& pyr, const RoIFeature<S>& roi, const Mat<S>& droi, int wr, int hr,
                     int ratio, std::vector<Mat<S>>& dlevels) {
  const auto& lvl = pyr.levels[static_cast<std::size_t>(roi.level)];
  auto& dmap = dlevels[static_cast<std::size_t>(roi.level)];
  detail::forEachRoiTap(lvl.height, lvl.width, roi.box, wr, hr, ratio, [&](int bin, int idx, double wgt) {
    dmap.col(idx) += static_cast<S>(wgt) * droi.col(bin);
  });
}

// ---------------------------------------------------------------------------
// Text side

/// Splits on whitespace; tokens containing non-ASCII bytes are split into
/// UTF-8 code points so that unsegmented scripts still produce tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    const bool ascii = std::all_of(cur.begin(), cur.end(), [](char ch) { return static_cast<unsigned char>(ch) < 0x80; });
    if (ascii) {
      out.push_back(cur);
    } else {
      for (std::size_t i = 0; i < cur.size();) {
        const unsigned char lead = static_cast<unsigned char>(cur[i]);
        std::size_t n = lead < 0x80 ? 1 : lead < 0xE0 ? 2 : lead < 0xF0 ? 3 : 4;
        out.push_back(cur.substr(i, n));
        i += n;
      }
    }
    cur.clear();
  };
  for (char ch : text) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r')
      flush();
    else
      cur.push_back(ch);
  }
  flush();
  return out;
}

/// Number of UTF-8 code points.
inline int charCount(std::string_view text) {
  int n = 0;
  for (char ch : text)
    if ((static_cast<unsigned char>(ch) & 0xC0) != 0x80) ++n;
  return n;
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  return h;
}

struct TokenizedSlogans {
  std::vector<std::vector<int>> token_ids;
  std::vector<int> lengths;
  std::size_t size() const { return lengths.size(); }
};

template <class S>
struct TextFeatures {
  Mat<S> L;                // D_n x d
  std::vector<bool> mask;  // true = real slogan
  int count() const { return static_cast<int>(std::count(mask.begin(), mask.end(), true)); }
};

/// Hashed bag-of-tokens content vector (learned table) concatenated with a
/// sinusoidal embedding of the slogan's character count.
template <class S>
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const ModelConfig& cfg, Rng& rng)
      : cfg_(cfg), table_("text.embedding", "text", cfg.content_dim(), cfg.text_vocab) {
    initNormal(table_, rng, 0.5);
  }

  TokenizedSlogans tokenize(const std::vector<std::string>& slogans) const {
    if (static_cast<int>(slogans.size()) > cfg_.D_n)
      throw std::invalid_argument("encodeTexts: " + std::to_string(slogans.size()) + " slogans exceed D_n = " +
                                  std::to_string(cfg_.D_n));
    TokenizedSlogans t;
    for (const auto& s : slogans) {
      std::vector<int> ids;
      for (const auto& tok : radm::tokenize(s))
        ids.push_back(static_cast<int>(fnv1a(tok) % static_cast<std::uint64_t>(cfg_.text_vocab)));
      t.token_ids.push_back(std::move(ids));
      t.lengths.push_back(charCount(s));
    }
    return t;
  }

  TextFeatures<S> forward(const TokenizedSlogans& tok) const {
    TextFeatures<S> tf;
    tf.L = Mat<S>::Zero(cfg_.D_n, cfg_.d);
    tf.mask.assign(static_cast<std::size_t>(cfg_.D_n), false);
    const int cd = cfg_.content_dim(), ld = cfg_.length_dim();
    std::vector<double> len(static_cast<std::size_t>(ld));
    for (std::size_t i = 0; i < tok.size(); ++i) {
      tf.mask[i] = true;
      const auto& ids = tok.token_ids[i];
      if (!ids.empty()) {
        Vec<S> acc = Vec<S>::Zero(cd);
        for (int id : ids) acc += table_.value.col(id);
        tf.L.row(static_cast<Eigen::Index>(i)).head(cd) = (acc / static_cast<S>(ids.size())).transpose();
      }
      sinusoid(tok.lengths[i], ld, len.data());
      for (int k = 0; k < ld; ++k) tf.L(static_cast<Eigen::Index>(i), cd + k) = static_cast<S>(len[k]);
    }
    return tf;
  }

  TextFeatures<S> encode(const std::vector<std::string>& slogans) const { return forward(tokenize(slogans)); }

  void backward(const TokenizedSlogans& tok, const Mat<S>& dL) {
    const int cd = cfg_.content_dim();
    for (std::size_t i = 0; i < tok.size(); ++i) {
      const auto& ids = tok.token_ids[i];
      if (ids.empty()) continue;
      const Vec<S> g = dL.row(static_cast<Eigen::Index>(i)).head(cd).transpose() / static_cast<S>(ids.size());
      for (int id : ids) table_.grad.col(id) += g;
    }
  }

  std::vector<Param<S>*> parameters() { return {&table_}; }

 private:
  ModelConfig cfg_;
  Param<S> table_;
};

}  // namespace radm
