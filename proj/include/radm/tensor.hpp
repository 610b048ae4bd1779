#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace radm {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Rng = std::mt19937_64;

/// A learned tensor with its accumulated gradient. `group` names the owning module.
template <class S>
struct Param {
  std::string name;
  std::string group;
  Mat<S> value;
  Mat<S> grad;

  Param() = default;
  Param(std::string n, std::string g, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), group(std::move(g)), value(Mat<S>::Zero(rows, cols)), grad(Mat<S>::Zero(rows, cols)) {}

  void zeroGrad() { grad.setZero(); }
};

/// Uniform(-a, a) with a = gain * sqrt(3 / fan_in) (He-style for gain sqrt(2)).
template <class S>
void initUniform(Param<S>& p, Rng& rng, double fan_in, double gain = 1.0) {
  const double a = gain * std::sqrt(3.0 / fan_in);
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<S>(u(rng));
}

template <class S>
void initNormal(Param<S>& p, Rng& rng, double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<S>(n(rng));
}

/// 3x3 im2col with padding 1. `map` is channels x (h*w), column index y*w + x.
/// Returns (channels*9) x (ho*wo).
template <class S>
Mat<S> im2col3x3(const Mat<S>& map, int h, int w, int stride, int& ho, int& wo) {
  const int ch = static_cast<int>(map.rows());
  ho = (h - 1) / stride + 1;
  wo = (w - 1) / stride + 1;
  Mat<S> cols = Mat<S>::Zero(ch * 9, ho * wo);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      const int col = oy * wo + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride + ky - 1;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          if (ix < 0 || ix >= w) continue;
          const int tap = ky * 3 + kx;
          for (int c = 0; c < ch; ++c) cols(c * 9 + tap, col) = map(c, iy * w + ix);
        }
      }
    }
  return cols;
}

/// Adjoint of im2col3x3: scatters column gradients back into a channels x (h*w) map.
template <class S>
Mat<S> col2im3x3(const Mat<S>& dcols, int ch, int h, int w, int stride, int ho, int wo) {
  Mat<S> dmap = Mat<S>::Zero(ch, h * w);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      const int col = oy * wo + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride + ky - 1;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          if (ix < 0 || ix >= w) continue;
          const int tap = ky * 3 + kx;
          for (int c = 0; c < ch; ++c) dmap(c, iy * w + ix) += dcols(c * 9 + tap, col);
        }
      }
    }
  return dmap;
}

/// Sinusoidal code of a scalar: out[2k] = sin(v / base^(2k/dim)), out[2k+1] = cos(...).
inline void sinusoid(double v, int dim, double* out, double base = 10000.0) {
  for (int k = 0; 2 * k < dim; ++k) {
    const double f = std::pow(base, -2.0 * k / dim);
    out[2 * k] = std::sin(v * f);
    if (2 * k + 1 < dim) out[2 * k + 1] = std::cos(v * f);
  }
}

}  // namespace radm
