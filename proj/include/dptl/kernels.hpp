#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "points.hpp"

namespace dptl {

enum class KernelFamily
{
  Triangular,   //!< prod_i max(1 - |t_i|, 0)
  Epanechnikov, //!< prod_i (3/4)(1 - t_i^2)_+
  Gaussian      //!< (2 pi)^{-d/2} exp(-|t|^2 / 2)
};

inline std::string_view to_string(KernelFamily f) noexcept
{
  switch (f) {
    case KernelFamily::Triangular: return "triangular";
    case KernelFamily::Epanechnikov: return "epanechnikov";
    case KernelFamily::Gaussian: return "gaussian";
  }
  return "unknown";
}

inline std::optional<KernelFamily> parse_kernel_family(std::string_view name) noexcept
{
  if (name == "triangular")
    return KernelFamily::Triangular;
  if (name == "epanechnikov" || name == "epanechnikov-product")
    return KernelFamily::Epanechnikov;
  if (name == "gaussian")
    return KernelFamily::Gaussian;
  return std::nullopt;
}

//! Kernel family on R^d together with the constants used by the noise
//! calibration and the variance proxies.
//!
//!   c_K  sup_t K(t) = K(0)
//!   b_K  min { K(t) : |t|_2 <= 1/2 }
//!   L_K  Lipschitz constant w.r.t. the Euclidean norm
//!
//! The Gaussian family is not compactly supported. The one-datum RKHS
//! sensitivity bound only needs K(0) <= c_K, so it still applies. The
//! Epanechnikov product kernel is not positive definite: it can be used for
//! the kernel statistic but not as a Gaussian-process covariance.
struct KernelSpec
{
  KernelFamily family = KernelFamily::Triangular;
  std::size_t dim = 1;
  double c_K = 1.0;
  double b_K = 0.5;
  double L_K = 1.0;

  bool compact_support() const noexcept { return family != KernelFamily::Gaussian; }
  bool positive_definite() const noexcept { return family != KernelFamily::Epanechnikov; }
};

inline KernelSpec make_kernel(KernelFamily family, std::size_t dim)
{
  detail::require<InputError>(dim >= 1, "make_kernel: dimension must be positive");
  const double d = static_cast<double>(dim);
  KernelSpec k;
  k.family = family;
  k.dim = dim;
  switch (family) {
    case KernelFamily::Triangular:
      k.c_K = 1.0;
      // the product is smallest on the 1/2-sphere when the mass is spread
      // evenly over all coordinates
      k.b_K = std::pow(1.0 - 0.5 / std::sqrt(d), d);
      k.L_K = std::sqrt(d);
      break;
    case KernelFamily::Epanechnikov:
      k.c_K = std::pow(0.75, d);
      // log(1 - s) is subadditive, so concentrating |t|^2 = 1/4 on one axis is worst
      k.b_K = std::pow(0.75, d) * 0.75;
      // each partial derivative is bounded by 2 (3/4)^d
      k.L_K = 2.0 * std::pow(0.75, d) * std::sqrt(d);
      break;
    case KernelFamily::Gaussian:
      k.c_K = std::pow(2.0 * std::numbers::pi, -0.5 * d);
      k.b_K = k.c_K * std::exp(-0.125);
      // |grad K| = |t| K(t), maximal at |t| = 1
      k.L_K = k.c_K * std::exp(-0.5);
      break;
  }
  return k;
}

namespace detail {

// K((a - b) / h) without allocating; a and b have the kernel's dimension.
inline double kernel_at_scaled_difference(const KernelSpec& spec,
                                          std::span<const double> a,
                                          std::span<const double> b,
                                          double inv_h) noexcept
{
  switch (spec.family) {
    case KernelFamily::Triangular: {
      double prod = 1.0;
      for (std::size_t i = 0; i < spec.dim; ++i) {
        const double u = 1.0 - std::abs(a[i] - b[i]) * inv_h;
        if (u <= 0.0)
          return 0.0;
        prod *= u;
      }
      return prod;
    }
    case KernelFamily::Epanechnikov: {
      double prod = 1.0;
      for (std::size_t i = 0; i < spec.dim; ++i) {
        const double t = (a[i] - b[i]) * inv_h;
        const double u = 1.0 - t * t;
        if (u <= 0.0)
          return 0.0;
        prod *= 0.75 * u;
      }
      return prod;
    }
    case KernelFamily::Gaussian: {
      double sq = 0.0;
      for (std::size_t i = 0; i < spec.dim; ++i) {
        const double t = (a[i] - b[i]) * inv_h;
        sq += t * t;
      }
      return spec.c_K * std::exp(-0.5 * sq);
    }
  }
  return 0.0;
}

} // namespace detail

//! K(t).
inline double eval_kernel(const KernelSpec& spec, std::span<const double> t)
{
  if (t.size() != spec.dim)
    throw InputError("eval_kernel: point has dimension " + std::to_string(t.size()) +
                     ", kernel has dimension " + std::to_string(spec.dim));
  const std::vector<double> origin(spec.dim, 0.0);
  return detail::kernel_at_scaled_difference(spec, t, origin, 1.0);
}

//! Gram matrix with entries K((x_a - x_b) / h), i.e. the covariance of the
//! Gaussian process used as privacy noise restricted to `points`.
inline Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Points& points, double h)
{
  detail::require<InputError>(h > 0.0, "gram_matrix: bandwidth must be positive");
  detail::require<InputError>(points.empty() || points.dim() == spec.dim,
                              "gram_matrix: point dimension does not match kernel");
  const auto q = static_cast<Eigen::Index>(points.size());
  const double inv_h = 1.0 / h;
  Eigen::MatrixXd g(q, q);
  for (Eigen::Index a = 0; a < q; ++a) {
    g(a, a) = spec.c_K;
    for (Eigen::Index b = 0; b < a; ++b) {
      const double v = detail::kernel_at_scaled_difference(spec, points[a], points[b], inv_h);
      g(a, b) = v;
      g(b, a) = v;
    }
  }
  return g;
}

} // namespace dptl
