#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "error.hpp"
#include "kernels.hpp"
#include "points.hpp"

namespace dptl {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

//! (epsilon, delta) budget of one server. epsilon = +inf marks a public server.
struct PrivacyBudget
{
  double epsilon = kInfinity;
  double delta = 0.0;

  static PrivacyBudget public_server() noexcept { return {}; }

  bool is_public() const noexcept { return std::isinf(epsilon); }

  void validate() const
  {
    if (!(epsilon > 0.0))
      throw ConfigError("privacy budget: epsilon must be positive");
    if (!(delta >= 0.0 && delta < 1.0))
      throw ConfigError("privacy budget: delta must lie in [0, 1)");
    if (!is_public() && delta <= 0.0)
      throw ConfigError("privacy budget: the Gaussian mechanism needs delta > 0 for finite epsilon");
  }
};

//! Noise scale of one server's Gaussian-process release.
struct NoiseCalibration
{
  double sigma = 0.0;             //!< multiplier of the unit GP draw
  double sensitivity_bound = 0.0; //!< sqrt(c_K) / (n h^d)
  double log_term = 0.0;          //!< log(2 * budget_divisor / delta)
  int budget_divisor = 1;         //!< 1 one-shot, |H| when split over a bandwidth grid
};

//! Worst-case RKHS-norm change of the kernel statistic under replacement of
//! one observation: sqrt(c_K) / (n h^d).
inline double rkhs_sensitivity(const KernelSpec& spec, std::size_t n, double h)
{
  detail::require<InputError>(n >= 1, "rkhs_sensitivity: n must be at least 1");
  detail::require<InputError>(h > 0.0, "rkhs_sensitivity: bandwidth must be positive");
  return std::sqrt(spec.c_K) /
         (static_cast<double>(n) * std::pow(h, static_cast<double>(spec.dim)));
}

//! sigma = sqrt(2 c_K log(2 D / delta)) / (n (epsilon / D) h^d) with D the
//! budget divisor. With D = |H| each per-bandwidth release is
//! (epsilon / |H|, delta / |H|)-DP so that the whole grid composes to
//! (epsilon, delta).
inline NoiseCalibration calibrate(const KernelSpec& spec,
                                  std::size_t n,
                                  double h,
                                  const PrivacyBudget& budget,
                                  int budget_divisor = 1)
{
  budget.validate();
  detail::require<InputError>(budget_divisor >= 1, "calibrate: budget divisor must be >= 1");
  NoiseCalibration cal;
  cal.budget_divisor = budget_divisor;
  cal.sensitivity_bound = rkhs_sensitivity(spec, n, h);
  if (budget.delta > 0.0)
    cal.log_term = std::log(2.0 * budget_divisor / budget.delta);
  if (budget.is_public())
    return cal;
  const double eps_split = budget.epsilon / budget_divisor;
  cal.sigma = std::sqrt(2.0 * spec.c_K * cal.log_term) /
              (static_cast<double>(n) * eps_split *
               std::pow(h, static_cast<double>(spec.dim)));
  return cal;
}

//! Gaussian-mechanism scale for a vector release with L2 sensitivity
//! `sensitivity`: sensitivity * sqrt(2 log(2 / delta)) / epsilon. Zero for a
//! public server.
inline double gaussian_mechanism_sigma(double sensitivity, const PrivacyBudget& budget)
{
  budget.validate();
  if (budget.is_public())
    return 0.0;
  return sensitivity * std::sqrt(2.0 * std::log(2.0 / budget.delta)) / budget.epsilon;
}

//! Draws from the mean-zero Gaussian process with covariance K((s - t) / h)
//! restricted to a fixed set of query points. The covariance factor is
//! computed once; each draw costs one triangular matrix-vector product.
//!
//! Coincident query points share one latent coordinate, so their draws are
//! exactly equal.
class GaussianProcessSampler
{
public:
  static constexpr double kInitialJitter = 1e-10; // relative to c_K
  static constexpr double kMaxJitter = 1e-6;

  GaussianProcessSampler(const KernelSpec& spec, const Points& points, double h)
    : h_(h)
    , size_(points.size())
  {
    detail::require<InputError>(h > 0.0, "GaussianProcessSampler: bandwidth must be positive");
    detail::require<InputError>(points.empty() || points.dim() == spec.dim,
                                "GaussianProcessSampler: point dimension does not match kernel");
    Points unique(spec.dim);
    index_.resize(size_);
    std::map<std::vector<double>, std::size_t> seen;
    for (std::size_t i = 0; i < size_; ++i) {
      std::vector<double> key(points[i].begin(), points[i].end());
      auto [it, inserted] = seen.emplace(std::move(key), unique.size());
      if (inserted)
        unique.push_back(points[i]);
      index_[i] = it->second;
    }
    if (unique.empty())
      return;

    const Eigen::MatrixXd gram = gram_matrix(spec, unique, h);
    const auto q = gram.rows();
    for (double rel = kInitialJitter; rel <= kMaxJitter * (1 + 1e-9); rel *= 10.0) {
      jitter_ = rel * spec.c_K;
      Eigen::LLT<Eigen::MatrixXd> llt(gram + jitter_ * Eigen::MatrixXd::Identity(q, q));
      if (llt.info() == Eigen::Success) {
        factor_ = llt.matrixL();
        return;
      }
    }
    std::ostringstream msg;
    msg << "GP covariance factorization failed: kernel=" << to_string(spec.family)
        << " d=" << spec.dim << " h=" << h << " unique points=" << q
        << " max jitter=" << jitter_;
    if (!spec.positive_definite())
      msg << " (this kernel family is not positive definite)";
    throw NumericalError(msg.str());
  }

  double bandwidth() const noexcept { return h_; }
  std::size_t size() const noexcept { return size_; }
  double jitter() const noexcept { return jitter_; }

  //! One unit-scale draw xi(x_1), ..., xi(x_q); deterministic given `seed`.
  std::vector<double> draw(std::uint64_t seed) const
  {
    std::vector<double> out(size_, 0.0);
    const auto q = factor_.rows();
    if (q == 0)
      return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(q);
    for (Eigen::Index i = 0; i < q; ++i)
      z[i] = normal(rng);
    const Eigen::VectorXd y = factor_.triangularView<Eigen::Lower>() * z;
    for (std::size_t i = 0; i < size_; ++i)
      out[i] = y[static_cast<Eigen::Index>(index_[i])];
    return out;
  }

  //! sigma * draw(seed); all zeros without sampling when sigma == 0.
  std::vector<double> draw_scaled(double sigma, std::uint64_t seed) const
  {
    if (sigma == 0.0)
      return std::vector<double>(size_, 0.0);
    auto out = draw(seed);
    for (auto& v : out)
      v *= sigma;
    return out;
  }

private:
  double h_;
  std::size_t size_;
  double jitter_ = 0.0;
  std::vector<std::size_t> index_;
  Eigen::MatrixXd factor_;
};

//! sigma * xi restricted to `points`, with xi ~ GP(0, K((s - t) / h)).
inline std::vector<double> sample_noise(const KernelSpec& spec,
                                        const Points& points,
                                        double h,
                                        const NoiseCalibration& calibration,
                                        std::uint64_t seed)
{
  if (calibration.sigma == 0.0)
    return std::vector<double>(points.size(), 0.0);
  return GaussianProcessSampler(spec, points, h).draw_scaled(calibration.sigma, seed);
}

//! Samplers for one fixed query set, keyed by bandwidth. Lazily populated by
//! `get`; `at` is read-only and safe to share across threads once every
//! bandwidth has been prepared.
class SamplerCache
{
public:
  SamplerCache(KernelSpec spec, Points points)
    : spec_(spec)
    , points_(std::move(points))
  {
  }

  const KernelSpec& kernel() const noexcept { return spec_; }
  const Points& points() const noexcept { return points_; }

  const GaussianProcessSampler& get(double h)
  {
    auto it = samplers_.find(h);
    if (it == samplers_.end())
      it = samplers_.emplace(h, std::make_unique<GaussianProcessSampler>(spec_, points_, h)).first;
    return *it->second;
  }

  const GaussianProcessSampler& at(double h) const
  {
    auto it = samplers_.find(h);
    if (it == samplers_.end())
      throw InputError("SamplerCache: bandwidth was not prepared");
    return *it->second;
  }

  bool contains(double h) const { return samplers_.count(h) > 0; }

private:
  KernelSpec spec_;
  Points points_;
  std::map<double, std::unique_ptr<GaussianProcessSampler>> samplers_;
};

} // namespace dptl
