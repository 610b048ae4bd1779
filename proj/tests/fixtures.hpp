#pragma once

// Random instances of library types for property tests.

#include <filesystem>
#include <functional>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "radm/encoders.hpp"

namespace fixture {

template <class S>
radm::Mat<S> randomMat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  std::normal_distribution<double> g(0, sd);
  radm::Mat<S> m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<S>(g(rng));
  return m;
}

template <class S>
std::vector<radm::RoIFeature<S>> randomRois(std::mt19937_64& rng, int n, int C, int P) {
  std::vector<radm::RoIFeature<S>> out(static_cast<std::size_t>(n));
  for (auto& r : out) {
    r.data = randomMat<S>(rng, C, P);
    r.box = oracle::randomBox(rng);
  }
  return out;
}

/// D_n x d features whose first `real` rows are random and marked real.
template <class S>
radm::TextFeatures<S> randomTexts(std::mt19937_64& rng, int D_n, int d, int real) {
  radm::TextFeatures<S> t;
  t.L = radm::Mat<S>::Zero(D_n, d);
  t.L.topRows(real) = randomMat<S>(rng, real, d);
  t.mask.assign(static_cast<std::size_t>(D_n), false);
  for (int i = 0; i < real; ++i) t.mask[static_cast<std::size_t>(i)] = true;
  return t;
}

template <class S>
double maxAbsDiff(const std::vector<radm::Mat<S>>& a, const std::vector<radm::Mat<S>>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, static_cast<double>((a[i] - b[i]).cwiseAbs().maxCoeff()));
  return m;
}

/// Flat view over several value/gradient tensor pairs for finite-difference probes.
struct ProbeSet {
  std::vector<double*> values;
  std::vector<const double*> grads;

  void add(radm::Mat<double>& value, const radm::Mat<double>& grad) {
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      values.push_back(value.data() + k);
      grads.push_back(grad.data() + k);
    }
  }
  void add(radm::Param<double>& p) { add(p.value, p.grad); }

  /// Keeps only entries whose analytic gradient is not negligible.
  ProbeSet live(double tol = 1e-10) const {
    ProbeSet out;
    for (std::size_t k = 0; k < values.size(); ++k)
      if (std::abs(*grads[k]) > tol) {
        out.values.push_back(values[k]);
        out.grads.push_back(grads[k]);
      }
    return out;
  }

  oracle::GradCheck check(const std::function<double()>& f, int probes, std::mt19937_64& rng) const {
    return oracle::checkGradient(values, f, [&](std::size_t k) { return *grads[k]; }, probes, rng);
  }
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("radm_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
