#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "radm/core.hpp"
#include "radm/decoder.hpp"
#include "radm/diffusion.hpp"
#include "radm/encoders.hpp"
#include "radm/gram.hpp"
#include "radm/tensor.hpp"
#include "radm/vtram.hpp"

namespace radm {

/// Which relation modules contribute to the decoder input. A disabled module's
/// block is replaced by zeros of the same shape.
struct AblationFlags {
  bool use_vtram = true;
  bool use_gram = true;
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

inline std::string variantName(const AblationFlags& f) {
  if (f.use_vtram && f.use_gram) return "full";
  if (!f.use_vtram && !f.use_gram) return "no-vtram-no-gram";
  return f.use_vtram ? "no-gram" : "no-vtram";
}

/// Full denoiser f(t, x_t, image, text). S is float for training and
/// checkpoints, double for gradient checks.
template <class S>
class Model {
 public:
  struct Context {
    StemInput<S> stem;
    FeaturePyramid<S> pyramid;
    TokenizedSlogans tokens;
    TextFeatures<S> text;
  };

  struct Cache {
    typename ImageEncoder<S>::Cache image;
    FeaturePyramid<S> pyramid;
    TextFeatures<S> text;
    std::vector<RoIFeature<S>> rois;
    VtramCache<S> vtram;
    GramCache<S> gram;
    DecoderCache<S> decoder;
  };

  Model() = default;
  Model(const ModelConfig& cfg, AblationFlags flags, std::uint64_t seed) : cfg_(cfg), flags_(flags) {
    cfg.validate();
    Rng rng(seed);
    image_ = ImageEncoder<S>(cfg, rng);
    text_ = TextEncoder<S>(cfg, rng);
    vtram_ = VtramWeights<S>(cfg, rng);
    gram_ = GramWeights<S>(cfg, rng);
    decoder_ = DecoderWeights<S>(cfg, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  const AblationFlags& flags() const { return flags_; }

  /// Parameters in a fixed order (checkpoint order).
  std::vector<Param<S>*> parameters() {
    std::vector<Param<S>*> out;
    for (auto* p : image_.parameters()) out.push_back(p);
    for (auto* p : text_.parameters()) out.push_back(p);
    for (auto* p : vtram_.parameters()) out.push_back(p);
    for (auto* p : gram_.parameters()) out.push_back(p);
    for (auto* p : decoder_.parameters()) out.push_back(p);
    return out;
  }

  /// Whether a parameter group takes part in the forward pass under the current flags.
  bool groupActive(const std::string& group) const {
    if (group == "vtram" || group == "text") return flags_.use_vtram;
    if (group == "gram") return flags_.use_gram;
    return true;
  }

  void zeroGrad() {
    for (auto* p : parameters()) p->zeroGrad();
  }

  StemInput<S> prepareImage(const Raster& image) const { return prepareStem<S>(image, cfg_); }
  FeaturePyramid<S> encodeImage(const Raster& image) const { return image_.forward(prepareImage(image)); }
  TextFeatures<S> encodeTexts(const std::vector<std::string>& slogans) const { return text_.encode(slogans); }
  TokenizedSlogans tokenize(const std::vector<std::string>& slogans) const { return text_.tokenize(slogans); }

  Context prepare(const Raster& image, const std::vector<std::string>& slogans) const {
    Context ctx;
    ctx.stem = prepareImage(image);
    ctx.pyramid = image_.forward(ctx.stem);
    ctx.tokens = text_.tokenize(slogans);
    ctx.text = text_.forward(ctx.tokens);
    return ctx;
  }

  /// Clamped [0,1] boxes the RoIs are pooled from, given the noisy signal.
  std::vector<BBox> roiBoxes(const Mat<S>& xt) const {
    const SignalCodec codec{cfg_.signal_scale};
    std::vector<BBox> boxes;
    for (Eigen::Index i = 0; i < xt.rows(); ++i) {
      Eigen::RowVectorXd r(4);
      for (int c = 0; c < 4; ++c)
        r(c) = std::clamp(static_cast<double>(xt(i, c)), -cfg_.signal_scale, cfg_.signal_scale);
      boxes.push_back(clampBox(codec.decodeRow(r)));
    }
    return boxes;
  }

  /// Forward from precomputed pyramid and text features.
  DecoderOutput<S> forwardFeatures(const FeaturePyramid<S>& pyr, const TextFeatures<S>& text, const Mat<S>& xt, int t,
                                   Cache* cache = nullptr) const {
    if (xt.rows() != cfg_.N || xt.cols() != 4)
      throw std::invalid_argument("Model: x_t must be N x 4 (N = " + std::to_string(cfg_.N) + ")");
    std::vector<RoIFeature<S>> rois;
    for (const auto& b : roiBoxes(xt)) rois.push_back(roiPool(pyr, b, cfg_.Wr, cfg_.Hr, cfg_.sampling_ratio));
    std::vector<Mat<S>> M;
    if (flags_.use_vtram) {
      M = vtramForward(rois, text, vtram_, cfg_.N, cache ? &cache->vtram : nullptr);
    } else {
      M.assign(rois.size(), Mat<S>::Zero(cfg_.C, cfg_.rois()));
    }
    const Mat<S> T = flags_.use_gram ? gramForward(rois, gram_, cfg_.eps_geo, cfg_.d_h, cache ? &cache->gram : nullptr)
                                     : Mat<S>::Zero(cfg_.N, cfg_.d_t);
    auto out = decode(M, T, rois, xt, t, decoder_, cfg_, cache ? &cache->decoder : nullptr);
    if (cache) cache->rois = std::move(rois);
    return out;
  }

  /// Full training forward from the fixed stem input and tokenized slogans.
  DecoderOutput<S> forward(const StemInput<S>& stem, const TokenizedSlogans& tokens, const Mat<S>& xt, int t,
                           Cache& cache) const {
    cache.image = {};
    cache.pyramid = image_.forward(stem, &cache.image);
    cache.text = text_.forward(tokens);
    return forwardFeatures(cache.pyramid, cache.text, xt, t, &cache);
  }

  /// Accumulates gradients of all parameters given d(loss)/d(outputs).
  void backward(const Cache& cache, const TokenizedSlogans& tokens, const Mat<S>& dlogits, const Mat<S>& dboxes) {
    const std::size_t n = cache.rois.size();
    const int cp_rows = cfg_.C, cp_cols = cfg_.rois();
    std::vector<Mat<S>> dM(n, Mat<S>::Zero(cp_rows, cp_cols));
    std::vector<Mat<S>> dV(n, Mat<S>::Zero(cp_rows, cp_cols));
    Mat<S> dT = Mat<S>::Zero(cfg_.N, cfg_.d_t);
    decodeBackward(cache.decoder, dlogits, dboxes, decoder_, cfg_, dM, dT, dV);
    if (flags_.use_vtram) {
      Mat<S> dL = Mat<S>::Zero(cache.text.L.rows(), cache.text.L.cols());
      vtramBackward(cache.rois, cache.vtram, dM, vtram_, dV, dL);
      text_.backward(tokens, dL);
    }
    if (flags_.use_gram) gramBackward(cache.gram, dT, gram_, dV);
    std::vector<Mat<S>> dlevels;
    for (const auto& lvl : cache.pyramid.levels) dlevels.push_back(Mat<S>::Zero(lvl.map.rows(), lvl.map.cols()));
    for (std::size_t i = 0; i < n; ++i)
      roiPoolBackward(cache.pyramid, cache.rois[i], dV[i], cfg_.Wr, cfg_.Hr, cfg_.sampling_ratio, dlevels);
    image_.backward(cache.image, cache.pyramid, dlevels);
  }

  /// Denoiser interface used by the sampler.
  Prediction predict(const Context& ctx, const BoxSignal& xt, int t) const {
    const auto out = forwardFeatures(ctx.pyramid, ctx.text, xt.cast<S>(), t);
    return {out.logits.template cast<double>(), out.boxes.template cast<double>()};
  }

 private:
  ModelConfig cfg_;
  AblationFlags flags_;
  ImageEncoder<S> image_;
  TextEncoder<S> text_;
  VtramWeights<S> vtram_;
  GramWeights<S> gram_;
  DecoderWeights<S> decoder_;
};

}  // namespace radm
