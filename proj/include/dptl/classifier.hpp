#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "error.hpp"
#include "kernels.hpp"
#include "points.hpp"
#include "privacy.hpp"
#include "rates.hpp"
#include "seeding.hpp"

namespace dptl {

//! Labeled sample held by one server. server_id 0 is the target.
struct ServerDataset
{
  Points covariates;
  std::vector<int> labels;
  int server_id = 0;
  //! Centering of the labels in the kernel statistic; 1/2 unless the labels
  //! are re-centered at the server's prevalence.
  double label_offset = 0.5;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return covariates.dim(); }

  void validate() const
  {
    if (covariates.size() != labels.size())
      throw InputError("ServerDataset: covariate and label counts differ");
    for (int y : labels)
      if (y != 0 && y != 1)
        throw InputError("ServerDataset: labels must be 0 or 1");
    for (double c : covariates.coords())
      if (!(c >= 0.0 && c <= 1.0))
        throw InputError("ServerDataset: covariates must lie in [0, 1]^d");
  }
};

//! Convex weights over the m + 1 servers.
struct TransferWeights
{
  std::vector<double> u;

  void validate() const
  {
    double s = 0.0;
    for (double x : u) {
      if (!(x >= 0.0))
        throw InputError("TransferWeights: weights must be non-negative");
      s += x;
    }
    if (u.empty() || std::abs(s - 1.0) > 1e-12)
      throw InputError("TransferWeights: weights must sum to one");
  }
};

//! Privatized weighted statistic at a set of query points with provenance.
struct PrivateEvaluation
{
  std::vector<double> values;
  double bandwidth = 0.0;
  TransferWeights weights;
  std::vector<NoiseCalibration> calibrations;
  std::uint64_t seed = 0;
};

namespace detail {

inline double inv_bandwidth_volume(double h, std::size_t d)
{
  return 1.0 / std::pow(h, static_cast<double>(d));
}

} // namespace detail

//! (1 / (n h^d)) sum_i (Y_i - offset) K((X_i - x0) / h), with x0 clamped to
//! the unit cube.
inline double kernel_statistic(const ServerDataset& data, const KernelSpec& spec, double h,
                               std::span<const double> x0)
{
  detail::require<InputError>(h > 0.0, "kernel_statistic: bandwidth must be positive");
  if (data.size() == 0)
    throw EmptyServerError("kernel_statistic: server " + std::to_string(data.server_id) +
                           " holds no observations");
  detail::require<InputError>(x0.size() == spec.dim && data.dim() == spec.dim,
                              "kernel_statistic: dimension mismatch");
  std::vector<double> x(x0.begin(), x0.end());
  for (auto& c : x)
    c = std::clamp(c, 0.0, 1.0);
  const double inv_h = 1.0 / h;
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    sum += (data.labels[i] - data.label_offset) *
           detail::kernel_at_scaled_difference(spec, data.covariates[i], x, inv_h);
  return sum * detail::inv_bandwidth_volume(h, spec.dim) / static_cast<double>(data.size());
}

//! Kernel statistic of one server at many query points. For compactly
//! supported kernels the observations are sorted along the first axis so
//! that only the slab |X_1 - x_1| < h is visited.
class KernelStatisticEvaluator
{
public:
  KernelStatisticEvaluator(const ServerDataset& data, const KernelSpec& spec)
    : spec_(spec)
    , n_(data.size())
    , server_id_(data.server_id)
  {
    detail::require<InputError>(data.size() == 0 || data.dim() == spec.dim,
                                "KernelStatisticEvaluator: dimension mismatch");
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), std::size_t{ 0 });
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return data.covariates[a][0] < data.covariates[b][0];
    });
    sorted_ = data.covariates.select(order);
    first_.reserve(n_);
    centered_.reserve(n_);
    for (auto i : order) {
      first_.push_back(data.covariates[i][0]);
      centered_.push_back(data.labels[i] - data.label_offset);
    }
  }

  std::size_t size() const noexcept { return n_; }

  std::vector<double> evaluate(double h, const Points& queries) const
  {
    detail::require<InputError>(h > 0.0, "kernel_statistic: bandwidth must be positive");
    if (n_ == 0)
      throw EmptyServerError("kernel_statistic: server " + std::to_string(server_id_) +
                             " holds no observations");
    detail::require<InputError>(queries.empty() || queries.dim() == spec_.dim,
                                "kernel_statistic: query dimension mismatch");
    const double inv_h = 1.0 / h;
    const double scale = detail::inv_bandwidth_volume(h, spec_.dim) / static_cast<double>(n_);
    std::vector<double> out(queries.size());
    std::vector<double> x(spec_.dim);
    for (std::size_t q = 0; q < queries.size(); ++q) {
      for (std::size_t k = 0; k < spec_.dim; ++k)
        x[k] = std::clamp(queries[q][k], 0.0, 1.0);
      std::size_t lo = 0, hi = n_;
      if (spec_.compact_support()) {
        lo = static_cast<std::size_t>(
          std::upper_bound(first_.begin(), first_.end(), x[0] - h) - first_.begin());
        hi = static_cast<std::size_t>(
          std::lower_bound(first_.begin(), first_.end(), x[0] + h) - first_.begin());
      }
      double sum = 0.0;
      for (std::size_t i = lo; i < hi; ++i)
        sum += centered_[i] * detail::kernel_at_scaled_difference(spec_, sorted_[i], x, inv_h);
      out[q] = sum * scale;
    }
    return out;
  }

private:
  KernelSpec spec_;
  std::size_t n_;
  int server_id_;
  Points sorted_;
  std::vector<double> first_;
  std::vector<double> centered_;
};

inline std::vector<double> kernel_statistics(const ServerDataset& data, const KernelSpec& spec,
                                             double h, const Points& queries)
{
  return KernelStatisticEvaluator(data, spec).evaluate(h, queries);
}

//! Weights v_j = (n_j ∧ n_j^2 eps_j^2 h^d) h^{gamma_j beta} normalized to sum
//! to one. The target uses gamma_0 = 1; `gamma` holds the m source exponents.
inline TransferWeights theoretical_weights(std::span<const double> n,
                                           std::span<const double> eps,
                                           std::span<const double> gamma,
                                           double beta, std::size_t d, double h)
{
  detail::require<InputError>(!n.empty() && eps.size() == n.size() && gamma.size() + 1 == n.size(),
                              "theoretical_weights: need m+1 sizes and budgets and m exponents");
  detail::require<InputError>(h > 0.0 && h <= 1.0, "theoretical_weights: h must lie in (0, 1]");
  TransferWeights w;
  w.u.resize(n.size());
  double total = 0.0;
  for (std::size_t j = 0; j < n.size(); ++j) {
    detail::require<InputError>(n[j] >= 1.0, "theoretical_weights: sizes must be >= 1");
    const double g = j == 0 ? 1.0 : gamma[j - 1];
    w.u[j] = rates::detail::server_precision(n[j], eps[j], h, static_cast<double>(d)) *
             std::pow(h, g * beta);
    total += w.u[j];
  }
  detail::require<NumericalError>(total > 0.0, "theoretical_weights: all weights vanished");
  for (auto& x : w.u)
    x /= total;
  return w;
}

//! Values sum_j u_j (T_h^(j)(x_q) + sigma_j xi^(j)(x_q)) with independent GP
//! draws per server; server j's draw uses derive_seed(seed, {j}). Servers
//! without observations are dropped and the remaining weights renormalized.
inline PrivateEvaluation private_weighted_statistic(std::span<const ServerDataset> servers,
                                                    const KernelSpec& spec,
                                                    double h,
                                                    const TransferWeights& weights,
                                                    std::span<const PrivacyBudget> budgets,
                                                    const Points& queries,
                                                    std::uint64_t seed,
                                                    SamplerCache* cache = nullptr)
{
  weights.validate();
  detail::require<InputError>(weights.u.size() == servers.size() && budgets.size() == servers.size(),
                              "private_weighted_statistic: one weight and budget per server");
  PrivateEvaluation ev;
  ev.bandwidth = h;
  ev.seed = seed;
  ev.weights = weights;
  ev.calibrations.resize(servers.size());

  double kept = 0.0;
  for (std::size_t j = 0; j < servers.size(); ++j)
    if (servers[j].size() > 0)
      kept += weights.u[j];
  detail::require<DataError>(kept > 0.0, "private_weighted_statistic: no server with data and positive weight");
  for (std::size_t j = 0; j < servers.size(); ++j)
    ev.weights.u[j] = servers[j].size() > 0 ? weights.u[j] / kept : 0.0;

  const Points clamped = queries.clamped_to_unit_cube();
  detail::require<InputError>(!cache || cache->points() == clamped,
                              "private_weighted_statistic: sampler cache built for other query points");
  std::optional<GaussianProcessSampler> local;
  auto sampler = [&]() -> const GaussianProcessSampler& {
    if (cache)
      return cache->get(h);
    if (!local)
      local.emplace(spec, clamped, h);
    return *local;
  };

  ev.values.assign(queries.size(), 0.0);
  for (std::size_t j = 0; j < servers.size(); ++j) {
    if (servers[j].size() == 0)
      continue;
    ev.calibrations[j] = calibrate(spec, servers[j].size(), h, budgets[j], 1);
    const double u = ev.weights.u[j];
    if (u == 0.0)
      continue;
    const auto stat = kernel_statistics(servers[j], spec, h, clamped);
    std::vector<double> noise(queries.size(), 0.0);
    if (ev.calibrations[j].sigma > 0.0)
      noise = sampler().draw_scaled(ev.calibrations[j].sigma, derive_seed(seed, { j }));
    for (std::size_t q = 0; q < queries.size(); ++q)
      ev.values[q] += u * (stat[q] + noise[q]);
  }
  return ev;
}

//! 1 if the privatized statistic is >= 0, else 0.
inline std::vector<int> classify(std::span<const double> values)
{
  std::vector<int> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [](double v) { return v >= 0.0 ? 1 : 0; });
  return out;
}

inline std::vector<int> classify(const PrivateEvaluation& ev)
{
  return classify(ev.values);
}

//! Bandwidth h_{opt,delta}: root of the bandwidth equation with right-hand
//! side log(2 / delta_min).
inline double solve_h_opt_delta(const rates::ProblemParams& params, double delta_min)
{
  detail::require<InputError>(delta_min > 0.0 && delta_min < 2.0,
                              "solve_h_opt_delta: delta_min must lie in (0, 2)");
  return rates::solve_rate_equation(params, std::log(2.0 / delta_min)).r;
}

} // namespace dptl
