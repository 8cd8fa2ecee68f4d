#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "classifier.hpp"
#include "error.hpp"
#include "kernels.hpp"
#include "points.hpp"
#include "privacy.hpp"
#include "seeding.hpp"

namespace dptl::adaptive {

//! Dyadic bandwidth grid {2^-j : j = 0..floor(log2(n_*) / d)}, largest first.
struct BandwidthGrid
{
  std::vector<double> values;
  double n_star = 0.0;

  std::size_t size() const noexcept { return values.size(); }
};

//! n_* = sum_j n_j ∧ n_j^2 eps_j^2.
inline double effective_information(std::span<const double> n, std::span<const double> eps)
{
  detail::require<InputError>(n.size() == eps.size(), "effective_information: size mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < n.size(); ++j)
    s += std::isinf(eps[j]) ? n[j] : std::min(n[j], n[j] * n[j] * eps[j] * eps[j]);
  return s;
}

inline BandwidthGrid build_grid(std::span<const double> n, std::span<const double> eps, std::size_t d)
{
  detail::require<InputError>(d >= 1, "build_grid: dimension must be positive");
  BandwidthGrid g;
  g.n_star = effective_information(n, eps);
  if (!(g.n_star >= 1.0))
    throw InputError("build_grid: degenerate problem, n_* = " + std::to_string(g.n_star) + " < 1");
  // the small slack keeps exact powers of two from rounding down
  const auto top = static_cast<int>(std::floor(std::log2(g.n_star) / static_cast<double>(d) + 1e-12));
  for (int j = 0; j <= top; ++j)
    g.values.push_back(std::ldexp(1.0, -j));
  return g;
}

//! u_j(h) = n_j ∧ n_j^2 (eps_j / |H|)^2 h^d for every server j.
inline std::vector<double> grid_precisions(double h, std::span<const double> n,
                                           std::span<const double> eps, std::size_t grid_size,
                                           std::size_t d)
{
  detail::require<InputError>(n.size() == eps.size(), "grid_precisions: size mismatch");
  std::vector<double> u(n.size());
  const double hd = std::pow(h, static_cast<double>(d));
  for (std::size_t j = 0; j < n.size(); ++j) {
    if (std::isinf(eps[j])) {
      u[j] = n[j];
      continue;
    }
    const double e = eps[j] / static_cast<double>(grid_size);
    u[j] = std::min(n[j], n[j] * n[j] * e * e * hd);
  }
  return u;
}

//! Source shares u_j(h) / sum_{k>=1} u_k(h), j = 1..m. Empty when m = 0 or
//! every source precision vanishes.
inline std::vector<double> source_shares(double h, std::span<const double> n,
                                         std::span<const double> eps, std::size_t grid_size,
                                         std::size_t d)
{
  auto u = grid_precisions(h, n, eps, grid_size, d);
  if (u.size() <= 1)
    return {};
  u.erase(u.begin());
  double s = 0.0;
  for (double x : u)
    s += x;
  if (!(s > 0.0))
    return {};
  for (auto& x : u)
    x /= s;
  return u;
}

//! Member of the restricted family: (w_0, (1 - w_0) u_1 / sum u, ...). Falls
//! back to w_0 = 1 when the source shares are undefined.
inline TransferWeights restricted_weights(double h, std::span<const double> n,
                                          std::span<const double> eps, std::size_t grid_size,
                                          std::size_t d, double w0)
{
  detail::require<InputError>(w0 >= 0.0 && w0 <= 1.0, "restricted_weights: w0 must lie in [0, 1]");
  const auto shares = source_shares(h, n, eps, grid_size, d);
  TransferWeights w;
  w.u.assign(n.size(), 0.0);
  if (shares.empty()) {
    w.u[0] = 1.0;
    return w;
  }
  w.u[0] = w0;
  for (std::size_t j = 0; j < shares.size(); ++j)
    w.u[j + 1] = (1.0 - w0) * shares[j];
  return w;
}

//! Per-server variance coefficient
//!   c_K g_max / (3 n h^d) + 2 c_K^2 log(2|H|/delta) / (n^2 (eps/|H|)^2 h^{2d}).
inline double variance_coefficient(const KernelSpec& spec, double n, double eps, double delta,
                                   double h, std::size_t grid_size, double g_max = 1.0)
{
  const double hd = std::pow(h, static_cast<double>(spec.dim));
  const double sampling = spec.c_K * g_max / (3.0 * n * hd);
  if (std::isinf(eps))
    return sampling;
  const double H = static_cast<double>(grid_size);
  const double e = eps / H;
  return sampling + 2.0 * spec.c_K * spec.c_K * std::log(2.0 * H / delta) / (n * n * e * e * hd * hd);
}

inline std::vector<double> variance_coefficients(const KernelSpec& spec, std::span<const double> n,
                                                 std::span<const double> eps,
                                                 std::span<const double> delta, double h,
                                                 std::size_t grid_size, double g_max = 1.0)
{
  detail::require<InputError>(n.size() == eps.size() && n.size() == delta.size(),
                              "variance_coefficients: size mismatch");
  std::vector<double> a(n.size());
  for (std::size_t j = 0; j < n.size(); ++j)
    a[j] = variance_coefficient(spec, n[j], eps[j], delta[j], h, grid_size, g_max);
  return a;
}

//! v_0(h, w) of the restricted family.
inline double variance_proxy_homog(double h, double w0, std::span<const double> n,
                                   std::span<const double> eps, std::span<const double> delta,
                                   std::size_t grid_size, const KernelSpec& spec, double g_max = 1.0)
{
  const auto a = variance_coefficients(spec, n, eps, delta, h, grid_size, g_max);
  const auto shares = source_shares(h, n, eps, grid_size, spec.dim);
  double b = 0.0;
  for (std::size_t j = 0; j < shares.size(); ++j)
    b += shares[j] * shares[j] * a[j + 1];
  return w0 * w0 * a[0] + (1.0 - w0) * (1.0 - w0) * b;
}

//! v(h, w) = sum_j w_j^2 a_j.
inline double variance_proxy_general(double h, std::span<const double> w, std::span<const double> n,
                                     std::span<const double> eps, std::span<const double> delta,
                                     std::size_t grid_size, const KernelSpec& spec, double g_max = 1.0)
{
  detail::require<InputError>(w.size() == n.size(), "variance_proxy_general: one weight per server");
  const auto a = variance_coefficients(spec, n, eps, delta, h, grid_size, g_max);
  double v = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j)
    v += w[j] * w[j] * a[j];
  return v;
}

struct HomogSnr
{
  double rho = 0.0;
  double w0 = 1.0;
};

//! max over w0 in [0, 1] of (w0 A + (1 - w0) B)^2 / (w0^2 a + (1 - w0)^2 b).
//! The score equation is linear in w0 with root b A / (a B + b A), so the
//! maximum is attained at that root or at an endpoint. Ties keep the earlier
//! candidate in the order 1, 0, root.
inline HomogSnr snr_homog(double A, double B, double a, double b)
{
  detail::require<NumericalError>(a > 0.0, "snr_homog: target variance coefficient must be positive");
  auto ratio = [&](double w) {
    const double num = w * A + (1.0 - w) * B;
    const double den = w * w * a + (1.0 - w) * (1.0 - w) * b;
    if (!(den > 0.0))
      throw NumericalError("snr_homog: variance proxy vanished");
    return num * num / den;
  };
  HomogSnr best{ ratio(1.0), 1.0 };
  if (!(b > 0.0))
    return best;
  if (const double r0 = ratio(0.0); r0 > best.rho)
    best = { r0, 0.0 };
  const double den = a * B + b * A;
  if (den != 0.0) {
    const double w = std::clamp(b * A / den, 0.0, 1.0);
    if (const double r = ratio(w); r > best.rho)
      best = { r, w };
  }
  return best;
}

struct GeneralSnr
{
  double rho = 0.0;
  std::vector<double> w;
};

//! max over the simplex of (sum w_j t_j)^2 / sum w_j^2 a_j. The ratio is
//! invariant to scaling w, and for a fixed sign of the numerator the
//! Cauchy-Schwarz optimum w_j ∝ (±t_j)_+ / a_j is feasible.
inline GeneralSnr snr_general(std::span<const double> t, std::span<const double> a)
{
  detail::require<InputError>(!t.empty() && t.size() == a.size(), "snr_general: size mismatch");
  double pos = 0.0, neg = 0.0;
  for (std::size_t j = 0; j < t.size(); ++j) {
    detail::require<NumericalError>(a[j] > 0.0, "snr_general: variance coefficients must be positive");
    (t[j] > 0.0 ? pos : neg) += t[j] * t[j] / a[j];
  }
  GeneralSnr out;
  out.w.assign(t.size(), 0.0);
  if (pos == 0.0 && neg == 0.0) {
    std::fill(out.w.begin(), out.w.end(), 1.0 / static_cast<double>(t.size()));
    return out;
  }
  const double sign = pos >= neg ? 1.0 : -1.0;
  out.rho = std::max(pos, neg);
  double s = 0.0;
  for (std::size_t j = 0; j < t.size(); ++j) {
    out.w[j] = std::max(sign * t[j], 0.0) / a[j];
    s += out.w[j];
  }
  for (auto& x : out.w)
    x /= s;
  return out;
}

//! Threshold form for the general procedure. Prose: log(n_* |H| (m + 1));
//! Box: log(2 n_* |H|).
enum class ThresholdVariant
{
  Prose,
  Box
};

inline std::string_view to_string(ThresholdVariant v) noexcept
{
  return v == ThresholdVariant::Prose ? "prose" : "box";
}

inline std::optional<ThresholdVariant> parse_threshold_variant(std::string_view s) noexcept
{
  if (s == "prose")
    return ThresholdVariant::Prose;
  if (s == "box")
    return ThresholdVariant::Box;
  return std::nullopt;
}

inline double threshold_homog(double n_star, std::size_t grid_size)
{
  return 4.5 * std::log(2.0 * n_star * static_cast<double>(grid_size));
}

inline double threshold_general(double n_star, std::size_t grid_size, std::size_t m,
                                ThresholdVariant variant = ThresholdVariant::Prose)
{
  const double c = 2.25 * static_cast<double>(m + 1);
  const double H = static_cast<double>(grid_size);
  if (variant == ThresholdVariant::Prose)
    return c * std::log(n_star * H * static_cast<double>(m + 1));
  return c * std::log(2.0 * n_star * H);
}

//! Index into a largest-first grid: the smallest bandwidth whose ratio
//! exceeds the threshold, otherwise the argmax with ties to the larger h.
inline std::size_t select_index(std::span<const double> rho, double threshold)
{
  detail::require<InputError>(!rho.empty(), "select_index: empty grid");
  for (std::size_t k = rho.size(); k-- > 0;)
    if (rho[k] > threshold)
      return k;
  std::size_t best = 0;
  for (std::size_t k = 1; k < rho.size(); ++k)
    if (rho[k] > rho[best])
      best = k;
  return best;
}

//! Outcome at one query point.
struct Selection
{
  std::size_t h_index = 0;
  double h = 0.0;
  std::vector<double> w;
  double value = 0.0;
  bool exceeded = false;
  int label = 0; //!< 1 iff value > 0
};

struct SessionOptions
{
  double g_max = 1.0;
  ThresholdVariant threshold = ThresholdVariant::Prose;
};

//! One adaptive classification session over a fixed query set. Every
//! (bandwidth, server) pair gets exactly one joint GP draw over the queries,
//! calibrated at (eps_j / |H|, delta_j / |H|), so the whole session is
//! (eps_j, delta_j)-DP per server. All statistics are computed in the
//! constructor; the selection methods are const.
class AdaptiveSession
{
public:
  AdaptiveSession(std::span<const ServerDataset> servers,
                  const KernelSpec& spec,
                  std::span<const PrivacyBudget> budgets,
                  const Points& queries,
                  std::uint64_t seed,
                  SessionOptions options = {},
                  const SamplerCache* cache = nullptr)
    : spec_(spec)
    , options_(options)
    , queries_(queries.size())
  {
    detail::require<InputError>(!servers.empty() && budgets.size() == servers.size(),
                                "AdaptiveSession: need one budget per server");
    for (std::size_t j = 0; j < servers.size(); ++j) {
      budgets[j].validate();
      if (servers[j].size() == 0)
        throw EmptyServerError("AdaptiveSession: server " + std::to_string(servers[j].server_id) +
                               " holds no observations");
      n_.push_back(static_cast<double>(servers[j].size()));
      eps_.push_back(budgets[j].epsilon);
      delta_.push_back(budgets[j].delta);
    }
    grid_ = build_grid(n_, eps_, spec.dim);
    const std::size_t H = grid_.size();
    const std::size_t S = servers.size();

    const Points clamped = queries.clamped_to_unit_cube();
    detail::require<InputError>(!cache || cache->points() == clamped,
                                "AdaptiveSession: sampler cache built for other query points");
    std::vector<KernelStatisticEvaluator> evaluators;
    evaluators.reserve(S);
    for (const auto& s : servers)
      evaluators.emplace_back(s, spec);

    tilde_.assign(H, std::vector<std::vector<double>>(S));
    coef_.resize(H);
    shares_.resize(H);
    for (std::size_t k = 0; k < H; ++k) {
      const double h = grid_.values[k];
      coef_[k] = variance_coefficients(spec, n_, eps_, delta_, h, H, options_.g_max);
      shares_[k] = source_shares(h, n_, eps_, H, spec.dim);
      std::optional<GaussianProcessSampler> local;
      for (std::size_t j = 0; j < S; ++j) {
        auto& t = tilde_[k][j];
        t = evaluators[j].evaluate(h, clamped);
        const auto cal = calibrate(spec, servers[j].size(), h, budgets[j], static_cast<int>(H));
        if (cal.sigma == 0.0)
          continue;
        const GaussianProcessSampler* sampler = nullptr;
        if (cache) {
          sampler = &cache->at(h);
        } else {
          if (!local)
            local.emplace(spec, clamped, h);
          sampler = &*local;
        }
        const auto noise = sampler->draw_scaled(cal.sigma, derive_seed(seed, { k, j }));
        for (std::size_t q = 0; q < t.size(); ++q)
          t[q] += noise[q];
      }
    }
  }

  const BandwidthGrid& grid() const noexcept { return grid_; }
  std::size_t num_servers() const noexcept { return n_.size(); }
  std::size_t num_queries() const noexcept { return queries_; }
  std::span<const double> sizes() const noexcept { return n_; }

  //! Noisy per-server statistic T_h^(j)(x_q) + sigma_j xi^(j)(x_q).
  double noisy_statistic(std::size_t h_index, std::size_t server, std::size_t q) const
  {
    return tilde_.at(h_index).at(server).at(q);
  }
  std::span<const double> variance_coefs(std::size_t h_index) const { return coef_.at(h_index); }

  double homog_threshold() const { return threshold_homog(grid_.n_star, grid_.size()); }
  double general_threshold() const
  {
    return threshold_general(grid_.n_star, grid_.size(), n_.size() - 1, options_.threshold);
  }

  //! Restricted-family ratio at one bandwidth.
  HomogSnr snr_homog_at(std::size_t k, std::size_t q) const
  {
    const auto& sh = shares_[k];
    double B = 0.0, b = 0.0;
    for (std::size_t j = 0; j < sh.size(); ++j) {
      B += sh[j] * tilde_[k][j + 1][q];
      b += sh[j] * sh[j] * coef_[k][j + 1];
    }
    return snr_homog(tilde_[k][0][q], B, coef_[k][0], b);
  }

  GeneralSnr snr_general_at(std::size_t k, std::size_t q) const
  {
    return snr_general(column(k, q), coef_[k]);
  }

  //! Restricted-family procedure with threshold 4.5 log(2 n_* |H|).
  Selection select_homog(std::size_t q) const
  {
    std::vector<double> rho(grid_.size());
    std::vector<HomogSnr> best(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k) {
      best[k] = snr_homog_at(k, q);
      rho[k] = best[k].rho;
    }
    const double thr = homog_threshold();
    const std::size_t k = select_index(rho, thr);
    std::vector<double> w(n_.size(), 0.0);
    const auto& sh = shares_[k];
    w[0] = sh.empty() ? 1.0 : best[k].w0;
    for (std::size_t j = 0; j < sh.size(); ++j)
      w[j + 1] = (1.0 - best[k].w0) * sh[j];
    return finish(k, q, std::move(w), rho[k] > thr);
  }

  //! Free simplex weights with threshold C_* log(...), C_* = 2.25 (m + 1).
  Selection select_general(std::size_t q) const
  {
    std::vector<double> rho(grid_.size());
    std::vector<std::vector<double>> ws(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k) {
      auto g = snr_general_at(k, q);
      rho[k] = g.rho;
      ws[k] = std::move(g.w);
    }
    const double thr = general_threshold();
    const std::size_t k = select_index(rho, thr);
    return finish(k, q, std::move(ws[k]), rho[k] > thr);
  }

  //! Bandwidth selection only, with the weight vector held fixed; uses the
  //! general threshold.
  Selection select_fixed(std::size_t q, std::span<const double> w) const
  {
    detail::require<InputError>(w.size() == n_.size(), "select_fixed: one weight per server");
    std::vector<double> rho(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k) {
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) {
        num += w[j] * tilde_[k][j][q];
        den += w[j] * w[j] * coef_[k][j];
      }
      rho[k] = num * num / den;
    }
    const double thr = general_threshold();
    const std::size_t k = select_index(rho, thr);
    return finish(k, q, std::vector<double>(w.begin(), w.end()), rho[k] > thr);
  }

private:
  std::vector<double> column(std::size_t k, std::size_t q) const
  {
    std::vector<double> t(n_.size());
    for (std::size_t j = 0; j < t.size(); ++j)
      t[j] = tilde_[k][j][q];
    return t;
  }

  Selection finish(std::size_t k, std::size_t q, std::vector<double> w, bool exceeded) const
  {
    Selection s;
    s.h_index = k;
    s.h = grid_.values[k];
    s.exceeded = exceeded;
    for (std::size_t j = 0; j < w.size(); ++j)
      s.value += w[j] * tilde_[k][j][q];
    s.w = std::move(w);
    s.label = s.value > 0.0 ? 1 : 0;
    return s;
  }

  KernelSpec spec_;
  SessionOptions options_;
  std::size_t queries_;
  std::vector<double> n_, eps_, delta_;
  BandwidthGrid grid_;
  // [h][server][query]
  std::vector<std::vector<std::vector<double>>> tilde_;
  std::vector<std::vector<double>> coef_;
  std::vector<std::vector<double>> shares_;
};

//! Single-point convenience wrappers.
inline Selection select_bandwidth_homog(std::span<const double> x0,
                                        std::span<const ServerDataset> servers,
                                        const KernelSpec& spec,
                                        std::span<const PrivacyBudget> budgets,
                                        std::uint64_t seed,
                                        SessionOptions options = {})
{
  Points q(spec.dim);
  q.push_back(x0);
  return AdaptiveSession(servers, spec, budgets, q, seed, options).select_homog(0);
}

inline Selection select_bandwidth_general(std::span<const double> x0,
                                          std::span<const ServerDataset> servers,
                                          const KernelSpec& spec,
                                          std::span<const PrivacyBudget> budgets,
                                          std::uint64_t seed,
                                          SessionOptions options = {})
{
  Points q(spec.dim);
  q.push_back(x0);
  return AdaptiveSession(servers, spec, budgets, q, seed, options).select_general(0);
}

} // namespace dptl::adaptive
