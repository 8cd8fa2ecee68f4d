#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "adaptive.hpp"
#include "classifier.hpp"
#include "dataio.hpp"
#include "error.hpp"
#include "kernels.hpp"
#include "points.hpp"
#include "privacy.hpp"
#include "seeding.hpp"

namespace dptl::sim {

//! 1 ∧ (1/2 + sign((x1 - 1/2)(x2 - 1/2)) |x1 - 1/2|^{1/4} |x2 - 1/2|^{1/4})_+
inline double eta_target(std::span<const double> x)
{
  dptl::detail::require<InputError>(x.size() == 2, "eta_target: the design is two-dimensional");
  const double a = x[0] - 0.5;
  const double b = x[1] - 0.5;
  const double p = a * b;
  const double s = p > 0.0 ? 1.0 : (p < 0.0 ? -1.0 : 0.0);
  const double v = 0.5 + s * std::pow(std::abs(a), 0.25) * std::pow(std::abs(b), 0.25);
  return std::clamp(v, 0.0, 1.0);
}

//! Source regression function expressed through the target value.
inline double eta_source_from_target(double eta_t, double gamma)
{
  dptl::detail::require<InputError>(gamma > 0.0, "eta_source: gamma must be positive");
  const double dev = eta_t - 0.5;
  const double s = dev > 0.0 ? 1.0 : (dev < 0.0 ? -1.0 : 0.0);
  return std::clamp(0.5 + s * std::pow(std::abs(dev), gamma), 0.0, 1.0);
}

inline double eta_source(std::span<const double> x, double gamma)
{
  return eta_source_from_target(eta_target(x), gamma);
}

inline Points uniform_points(std::size_t n, std::size_t d, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> c(n * d);
  for (auto& v : c)
    v = unif(rng);
  return Points(d, std::move(c));
}

//! Uniform covariates on [0, 1]^2 with labels drawn from eta_target
//! (server 0) or eta_source (any other server).
inline ServerDataset generate(std::size_t n, int server_id, double gamma, std::uint64_t seed)
{
  ServerDataset s;
  s.server_id = server_id;
  s.covariates = uniform_points(n, 2, seed);
  std::mt19937_64 rng(derive_seed(seed, { 1 }));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  s.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double eta = server_id == 0 ? eta_target(s.covariates[i])
                                      : eta_source(s.covariates[i], gamma);
    s.labels[i] = unif(rng) < eta ? 1 : 0;
  }
  return s;
}

//! Target test points together with their true regression values.
struct TestSet
{
  Points x;
  std::vector<int> y;
  std::vector<double> eta;
};

inline TestSet make_test_set(std::size_t n, std::uint64_t seed)
{
  auto d = generate(n, 0, 1.0, seed);
  TestSet t;
  t.x = std::move(d.covariates);
  t.y = std::move(d.labels);
  t.eta.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    t.eta.push_back(eta_target(t.x[i]));
  return t;
}

struct MonteCarloEstimate
{
  double mean = 0.0;
  double se = 0.0;
};

//! E[max(eta_T, 1 - eta_T)] under the uniform design.
inline MonteCarloEstimate bayes_accuracy(std::size_t samples, std::uint64_t seed)
{
  dptl::detail::require<InputError>(samples >= 2, "bayes_accuracy: need at least two samples");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double s = 0.0, s2 = 0.0;
  double x[2];
  for (std::size_t i = 0; i < samples; ++i) {
    x[0] = unif(rng);
    x[1] = unif(rng);
    const double e = eta_target(x);
    const double v = std::max(e, 1.0 - e);
    s += v;
    s2 += v * v;
  }
  const double N = static_cast<double>(samples);
  const double mean = s / N;
  const double var = std::max(0.0, (s2 - N * mean * mean) / (N - 1.0));
  return { mean, std::sqrt(var / N) };
}

inline double accuracy(std::span<const int> pred, std::span<const int> y)
{
  dptl::detail::require<InputError>(pred.size() == y.size() && !y.empty(), "accuracy: size mismatch");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    ok += pred[i] == y[i];
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

//! Harmonic mean of precision and recall for class 1; 0 without true positives.
inline double f1_score(std::span<const int> pred, std::span<const int> y)
{
  dptl::detail::require<InputError>(pred.size() == y.size(), "f1_score: size mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    tp += pred[i] == 1 && y[i] == 1;
    fp += pred[i] == 1 && y[i] == 0;
    fn += pred[i] == 0 && y[i] == 1;
  }
  if (tp == 0)
    return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

//! Conditional excess risk against the Bayes rule 1(eta >= 1/2):
//! mean of |2 eta - 1| over points where the prediction disagrees.
inline double excess_risk(std::span<const int> pred, std::span<const double> eta)
{
  dptl::detail::require<InputError>(pred.size() == eta.size() && !eta.empty(), "excess_risk: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < eta.size(); ++i) {
    const int bayes = eta[i] >= 0.5 ? 1 : 0;
    if (pred[i] != bayes)
      s += std::abs(2.0 * eta[i] - 1.0);
  }
  return s / static_cast<double>(eta.size());
}

// ---------------------------------------------------------------------------
// Histogram baseline

//! Private histogram statistic of one server at the queries' bins. Bins are
//! cubes of side h; the bin statistic (1/(n h^d)) sum (Y - offset) 1(X in b)
//! gets independent N(0, sigma^2) noise with sigma from the Gaussian
//! mechanism at sensitivity 1/(n h^d). Bin b's noise is seeded by
//! derive_seed(seed, {b}) so it does not depend on which bins are queried.
inline std::vector<double> histogram_statistics(const ServerDataset& data, double h,
                                                const PrivacyBudget& budget,
                                                const Points& queries, std::uint64_t seed)
{
  dptl::detail::require<InputError>(h > 0.0 && h <= 1.0, "histogram_statistics: h must lie in (0, 1]");
  if (data.size() == 0)
    throw EmptyServerError("histogram_statistics: server " + std::to_string(data.server_id) +
                           " holds no observations");
  const std::size_t d = data.dim();
  dptl::detail::require<InputError>(queries.empty() || queries.dim() == d,
                              "histogram_statistics: dimension mismatch");
  const auto per_axis = static_cast<std::uint64_t>(std::max(1.0, std::round(1.0 / h)));
  auto bin_of = [&](std::span<const double> x) {
    std::uint64_t b = 0;
    for (std::size_t k = 0; k < d; ++k) {
      const double c = std::clamp(x[k], 0.0, 1.0);
      const auto i = std::min(static_cast<std::uint64_t>(c / h), per_axis - 1);
      b = b * per_axis + i;
    }
    return b;
  };
  const double scale =
    1.0 / (static_cast<double>(data.size()) * std::pow(h, static_cast<double>(d)));
  std::unordered_map<std::uint64_t, double> sums;
  for (std::size_t i = 0; i < data.size(); ++i)
    sums[bin_of(data.covariates[i])] += data.labels[i] - data.label_offset;

  const double sigma = gaussian_mechanism_sigma(scale, budget);
  std::unordered_map<std::uint64_t, double> noise;
  std::vector<double> out(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto b = bin_of(queries[q]);
    double v = 0.0;
    if (auto it = sums.find(b); it != sums.end())
      v = it->second * scale;
    if (sigma > 0.0) {
      auto it = noise.find(b);
      if (it == noise.end()) {
        std::mt19937_64 rng(derive_seed(seed, { b }));
        it = noise.emplace(b, sigma * std::normal_distribution<double>()(rng)).first;
      }
      v += it->second;
    }
    out[q] = v;
  }
  return out;
}

//! Histogram classifier with weight w on the target and (1 - w)/m on each
//! source; label 1 iff the combined statistic is >= 0.
inline std::vector<int> dt_hist_classifier(std::span<const ServerDataset> servers, double h, double w,
                                           std::span<const PrivacyBudget> budgets,
                                           const Points& queries, std::uint64_t seed)
{
  dptl::detail::require<InputError>(!servers.empty() && budgets.size() == servers.size(),
                              "dt_hist_classifier: need one budget per server");
  dptl::detail::require<InputError>(w >= 0.0 && w <= 1.0, "dt_hist_classifier: w must lie in [0, 1]");
  const std::size_t m = servers.size() - 1;
  std::vector<double> total(queries.size(), 0.0);
  for (std::size_t j = 0; j < servers.size(); ++j) {
    const double u = j == 0 ? (m == 0 ? 1.0 : w) : (1.0 - w) / static_cast<double>(m);
    if (u == 0.0)
      continue;
    const auto s = histogram_statistics(servers[j], h, budgets[j], queries, derive_seed(seed, { j }));
    for (std::size_t q = 0; q < s.size(); ++q)
      total[q] += u * s[q];
  }
  return classify(total);
}

// ---------------------------------------------------------------------------
// Methods

enum class Method
{
  DTK,        //!< kernel classifier, (h, w) tuned on the test set
  TargetDTK,  //!< kernel classifier on the target only, h tuned on the test set
  DTHist,     //!< histogram classifier, (h, w) tuned on the test set
  AdaptDTK,   //!< restricted-family adaptive procedure
  AdaptAll,   //!< adaptive procedure over the whole simplex
  AdaptTar,   //!< adaptive bandwidth, weights e_0
  AdaptSamp,  //!< adaptive bandwidth, weights proportional to sample sizes
  AdaptHomog  //!< same procedure as AdaptDTK, under its real-data name
};

inline std::string_view to_string(Method m) noexcept
{
  switch (m) {
    case Method::DTK: return "DTK";
    case Method::TargetDTK: return "targetDTK";
    case Method::DTHist: return "DT-HIST";
    case Method::AdaptDTK: return "AdaptDTK";
    case Method::AdaptAll: return "AdaptAll";
    case Method::AdaptTar: return "AdaptTar";
    case Method::AdaptSamp: return "AdaptSamp";
    case Method::AdaptHomog: return "AdaptHomog";
  }
  return "unknown";
}

inline std::optional<Method> parse_method(std::string_view s) noexcept
{
  for (auto m : { Method::DTK, Method::TargetDTK, Method::DTHist, Method::AdaptDTK,
                  Method::AdaptAll, Method::AdaptTar, Method::AdaptSamp, Method::AdaptHomog })
    if (s == to_string(m))
      return m;
  return std::nullopt;
}

inline bool is_adaptive(Method m) noexcept
{
  return m == Method::AdaptDTK || m == Method::AdaptAll || m == Method::AdaptTar ||
         m == Method::AdaptSamp || m == Method::AdaptHomog;
}

inline bool uses_gp_noise(Method m) noexcept
{
  return m != Method::DTHist;
}

struct MethodOutcome
{
  Method method = Method::DTK;
  std::vector<int> predictions;
  double h_selected = 0.0;  //!< averaged over queries for adaptive methods
  double w0_selected = 0.0; //!< likewise
};

inline const std::vector<double>& default_oracle_bandwidths()
{
  static const std::vector<double> h{ 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125 };
  return h;
}

//! Noisy statistic T_h^(j) + sigma_j xi_h^(j) at the queries with one-shot
//! calibration. Server j's draw at bandwidth index k uses
//! derive_seed(seed, {k, j}).
inline std::vector<double> noisy_kernel_statistic(const ServerDataset& server, std::size_t j,
                                                  const KernelSpec& spec, double h, std::size_t k,
                                                  const PrivacyBudget& budget, const Points& queries,
                                                  std::uint64_t seed, const SamplerCache* cache)
{
  auto t = kernel_statistics(server, spec, h, queries);
  const auto cal = calibrate(spec, server.size(), h, budget, 1);
  if (cal.sigma == 0.0)
    return t;
  std::optional<GaussianProcessSampler> local;
  const GaussianProcessSampler* sampler = nullptr;
  if (cache && cache->contains(h)) {
    sampler = &cache->at(h);
  } else {
    local.emplace(spec, queries.clamped_to_unit_cube(), h);
    sampler = &*local;
  }
  const auto noise = sampler->draw_scaled(cal.sigma, derive_seed(seed, { k, j }));
  for (std::size_t q = 0; q < t.size(); ++q)
    t[q] += noise[q];
  return t;
}

namespace detail {

// Best (h, w) by test accuracy given per-bandwidth target and source-average
// statistics. Ties keep the first pair in (h, w) order.
struct OracleChoice
{
  std::size_t k = 0;
  double w = 1.0;
  double acc = -1.0;
};

inline OracleChoice oracle_search(const std::vector<std::vector<double>>& target,
                                  const std::vector<std::vector<double>>& sources,
                                  std::span<const double> w_grid, std::span<const int> y)
{
  OracleChoice best;
  std::vector<int> pred(y.size());
  for (std::size_t k = 0; k < target.size(); ++k) {
    for (double w : w_grid) {
      for (std::size_t q = 0; q < y.size(); ++q) {
        const double v = sources.empty() ? target[k][q] : w * target[k][q] + (1.0 - w) * sources[k][q];
        pred[q] = v >= 0.0 ? 1 : 0;
      }
      const double acc = dptl::sim::accuracy(pred, y);
      if (acc > best.acc)
        best = { k, w, acc };
    }
  }
  return best;
}

inline std::vector<int> combine_predictions(const std::vector<double>& target,
                                            const std::vector<double>* sources, double w)
{
  std::vector<int> pred(target.size());
  for (std::size_t q = 0; q < target.size(); ++q) {
    const double v = sources ? w * target[q] + (1.0 - w) * (*sources)[q] : target[q];
    pred[q] = v >= 0.0 ? 1 : 0;
  }
  return pred;
}

} // namespace detail

//! Weight grid {i / steps : i = 0..steps}.
inline std::vector<double> weight_grid(std::size_t steps)
{
  std::vector<double> w(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i)
    w[i] = static_cast<double>(i) / static_cast<double>(steps);
  return w;
}

struct OracleOptions
{
  std::vector<double> h_grid = default_oracle_bandwidths();
  std::size_t w_steps = 100;
};

//! DTK and targetDTK from one private release per (h, server): targetDTK is
//! the w = 1 slice of the same search, so both see identical noise.
inline std::vector<MethodOutcome> oracle_kernel_methods(std::span<const ServerDataset> servers,
                                                        const KernelSpec& spec,
                                                        std::span<const PrivacyBudget> budgets,
                                                        const TestSet& test, std::uint64_t seed,
                                                        const SamplerCache* cache,
                                                        const OracleOptions& opt,
                                                        bool want_dtk, bool want_target)
{
  const std::size_t m = servers.size() - 1;
  std::vector<std::vector<double>> target(opt.h_grid.size());
  std::vector<std::vector<double>> sources(m > 0 ? opt.h_grid.size() : 0);
  for (std::size_t k = 0; k < opt.h_grid.size(); ++k) {
    const double h = opt.h_grid[k];
    target[k] = noisy_kernel_statistic(servers[0], 0, spec, h, k, budgets[0], test.x, seed, cache);
    if (m == 0 || !want_dtk)
      continue;
    sources[k].assign(test.x.size(), 0.0);
    for (std::size_t j = 1; j <= m; ++j) {
      const auto t = noisy_kernel_statistic(servers[j], j, spec, h, k, budgets[j], test.x, seed, cache);
      for (std::size_t q = 0; q < t.size(); ++q)
        sources[k][q] += t[q] / static_cast<double>(m);
    }
  }
  std::vector<MethodOutcome> out;
  if (want_dtk) {
    const auto w_grid = weight_grid(opt.w_steps);
    const std::vector<std::vector<double>> none;
    const auto c = detail::oracle_search(target, (m > 0 ? sources : none), w_grid, test.y);
    MethodOutcome o{ Method::DTK, {}, opt.h_grid[c.k], m > 0 ? c.w : 1.0 };
    o.predictions = detail::combine_predictions(target[c.k], m > 0 ? &sources[c.k] : nullptr, c.w);
    out.push_back(std::move(o));
  }
  if (want_target) {
    const std::vector<double> one{ 1.0 };
    const std::vector<std::vector<double>> none;
    const auto c = detail::oracle_search(target, none, one, test.y);
    MethodOutcome o{ Method::TargetDTK, {}, opt.h_grid[c.k], 1.0 };
    o.predictions = detail::combine_predictions(target[c.k], nullptr, 1.0);
    out.push_back(std::move(o));
  }
  return out;
}

inline MethodOutcome oracle_histogram(std::span<const ServerDataset> servers,
                                      std::span<const PrivacyBudget> budgets, const TestSet& test,
                                      std::uint64_t seed, const OracleOptions& opt)
{
  const std::size_t m = servers.size() - 1;
  std::vector<std::vector<double>> target(opt.h_grid.size());
  std::vector<std::vector<double>> sources(m > 0 ? opt.h_grid.size() : 0);
  for (std::size_t k = 0; k < opt.h_grid.size(); ++k) {
    const double h = opt.h_grid[k];
    target[k] = histogram_statistics(servers[0], h, budgets[0], test.x, derive_seed(seed, { k, 0 }));
    if (m == 0)
      continue;
    sources[k].assign(test.x.size(), 0.0);
    for (std::size_t j = 1; j <= m; ++j) {
      const auto t = histogram_statistics(servers[j], h, budgets[j], test.x, derive_seed(seed, { k, j }));
      for (std::size_t q = 0; q < t.size(); ++q)
        sources[k][q] += t[q] / static_cast<double>(m);
    }
  }
  const auto w_grid = weight_grid(opt.w_steps);
  const auto c = detail::oracle_search(target, sources, w_grid, test.y);
  MethodOutcome o{ Method::DTHist, {}, opt.h_grid[c.k], m > 0 ? c.w : 1.0 };
  o.predictions = detail::combine_predictions(target[c.k], m > 0 ? &sources[c.k] : nullptr, c.w);
  return o;
}

//! Runs the requested adaptive procedures on one shared session.
inline std::vector<MethodOutcome> adaptive_methods(const adaptive::AdaptiveSession& session,
                                                   std::span<const Method> methods)
{
  std::vector<MethodOutcome> out;
  const auto n = session.sizes();
  std::vector<double> samp(n.begin(), n.end());
  double total = 0.0;
  for (double v : samp)
    total += v;
  for (auto& v : samp)
    v /= total;
  std::vector<double> tar(n.size(), 0.0);
  tar[0] = 1.0;

  for (auto method : methods) {
    if (!is_adaptive(method))
      continue;
    MethodOutcome o;
    o.method = method;
    o.predictions.resize(session.num_queries());
    for (std::size_t q = 0; q < session.num_queries(); ++q) {
      adaptive::Selection s;
      switch (method) {
        case Method::AdaptAll: s = session.select_general(q); break;
        case Method::AdaptTar: s = session.select_fixed(q, tar); break;
        case Method::AdaptSamp: s = session.select_fixed(q, samp); break;
        default: s = session.select_homog(q); break;
      }
      o.predictions[q] = s.label;
      o.h_selected += s.h;
      o.w0_selected += s.w[0];
    }
    const double Q = static_cast<double>(std::max<std::size_t>(1, session.num_queries()));
    o.h_selected /= Q;
    o.w0_selected /= Q;
    out.push_back(std::move(o));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenarios and sweeps

struct SimScenario
{
  std::size_t n = 500; //!< target size, and each source's size unless overridden
  std::size_t m = 1;
  double gamma = 1.0;
  double eps = 1.0;
  std::optional<double> delta;             //!< default n_j^{-2} per server
  std::optional<std::size_t> source_total; //!< split evenly across the m sources
  bool total_includes_target = false;      //!< split source_total over all m + 1 servers
  std::size_t d = 2;
  KernelFamily kernel = KernelFamily::Triangular;
  std::size_t replications = 50;
  std::uint64_t seed = 20240101;
  std::vector<Method> methods{ Method::DTK, Method::DTHist, Method::AdaptDTK };
  std::size_t test_size = 2000;
  std::size_t bayes_samples = 1000000;
  OracleOptions oracle;
  adaptive::SessionOptions session;

  //! Sizes of servers 0..m.
  std::vector<std::size_t> server_sizes() const
  {
    std::vector<std::size_t> sizes(m + 1, n);
    if (!source_total)
      return sizes;
    const std::size_t parts = total_includes_target ? m + 1 : m;
    const std::size_t first = total_includes_target ? 0 : 1;
    if (parts == 0)
      return sizes;
    const std::size_t base = *source_total / parts;
    const std::size_t extra = *source_total % parts;
    for (std::size_t i = 0; i < parts; ++i)
      sizes[first + i] = base + (i < extra ? 1 : 0);
    return sizes;
  }

  std::vector<PrivacyBudget> budgets() const
  {
    std::vector<PrivacyBudget> b;
    for (auto nj : server_sizes()) {
      PrivacyBudget p;
      p.epsilon = eps;
      p.delta = std::isinf(eps) ? 0.0 : delta.value_or(1.0 / (static_cast<double>(nj) * nj));
      b.push_back(p);
    }
    return b;
  }

  void validate() const
  {
    dptl::detail::require<ConfigError>(d == 2, "scenario: the simulation design is two-dimensional");
    dptl::detail::require<ConfigError>(eps > 0.0, "scenario: eps must be positive");
    dptl::detail::require<ConfigError>(gamma > 0.0, "scenario: gamma must be positive");
    dptl::detail::require<ConfigError>(replications >= 1, "scenario: need at least one replication");
    dptl::detail::require<ConfigError>(test_size >= 1, "scenario: test set must be nonempty");
    dptl::detail::require<ConfigError>(!methods.empty(), "scenario: no methods requested");
    for (auto s : server_sizes())
      dptl::detail::require<ConfigError>(s >= 1, "scenario: every server needs at least one observation");
    for (const auto& b : budgets())
      b.validate();
  }
};

//! Training data of one replicate. Data seeds depend only on the replicate
//! and server index so that sweep cells share data where sizes agree.
inline std::vector<ServerDataset> replicate_servers(const SimScenario& s, std::size_t replicate)
{
  const auto sizes = s.server_sizes();
  std::vector<ServerDataset> servers;
  for (std::size_t j = 0; j < sizes.size(); ++j)
    servers.push_back(generate(sizes[j], static_cast<int>(j), s.gamma,
                               derive_seed(s.seed, { 1, replicate, j })));
  return servers;
}

//! Bandwidths that need a GP factor over the test set.
inline std::set<double> required_bandwidths(const SimScenario& s)
{
  std::set<double> hs;
  if (std::isinf(s.eps))
    return hs;
  bool oracle = false, adapt = false;
  for (auto m : s.methods) {
    oracle |= m == Method::DTK || m == Method::TargetDTK;
    adapt |= is_adaptive(m);
  }
  if (oracle)
    hs.insert(s.oracle.h_grid.begin(), s.oracle.h_grid.end());
  if (adapt) {
    std::vector<double> n, eps;
    for (auto v : s.server_sizes()) {
      n.push_back(static_cast<double>(v));
      eps.push_back(s.eps);
    }
    for (double h : adaptive::build_grid(n, eps, s.d).values)
      hs.insert(h);
  }
  return hs;
}

struct ResultRow
{
  std::string method;
  double eps = 0.0;
  double gamma = 0.0;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t replicate = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
  double excess_risk = 0.0;
  double h_selected = 0.0;
  double w0_selected = 0.0;
};

//! All requested methods on one replicate of one scenario.
inline std::vector<ResultRow> run_replicate(const SimScenario& s, std::size_t replicate,
                                            const TestSet& test, const SamplerCache* cache)
{
  const auto servers = replicate_servers(s, replicate);
  const auto budgets = s.budgets();
  const auto spec = make_kernel(s.kernel, s.d);
  const std::uint64_t noise = derive_seed(s.seed, { 2, replicate });

  std::vector<MethodOutcome> outcomes;
  const auto has = [&](Method m) {
    return std::find(s.methods.begin(), s.methods.end(), m) != s.methods.end();
  };
  if (has(Method::DTK) || has(Method::TargetDTK)) {
    auto o = oracle_kernel_methods(servers, spec, budgets, test, derive_seed(noise, { 0 }), cache,
                                   s.oracle, has(Method::DTK), has(Method::TargetDTK));
    for (auto& x : o)
      outcomes.push_back(std::move(x));
  }
  if (has(Method::DTHist))
    outcomes.push_back(oracle_histogram(servers, budgets, test, derive_seed(noise, { 1 }), s.oracle));
  if (std::any_of(s.methods.begin(), s.methods.end(), is_adaptive)) {
    const adaptive::AdaptiveSession session(servers, spec, budgets, test.x, derive_seed(noise, { 2 }),
                                            s.session, cache);
    for (auto& x : adaptive_methods(session, s.methods))
      outcomes.push_back(std::move(x));
  }

  std::vector<ResultRow> rows;
  for (auto method : s.methods) {
    auto it = std::find_if(outcomes.begin(), outcomes.end(),
                           [&](const MethodOutcome& o) { return o.method == method; });
    if (it == outcomes.end())
      continue;
    ResultRow r;
    r.method = std::string(to_string(method));
    r.eps = s.eps;
    r.gamma = s.gamma;
    r.m = s.m;
    r.n = s.n;
    r.replicate = replicate;
    r.accuracy = accuracy(it->predictions, test.y);
    r.f1 = f1_score(it->predictions, test.y);
    r.excess_risk = excess_risk(it->predictions, test.eta);
    r.h_selected = it->h_selected;
    r.w0_selected = it->w0_selected;
    rows.push_back(std::move(r));
  }
  return rows;
}

enum class SweepVariable
{
  None,
  Eps,
  Gamma,
  M
};

inline std::string_view to_string(SweepVariable v) noexcept
{
  switch (v) {
    case SweepVariable::None: return "none";
    case SweepVariable::Eps: return "eps";
    case SweepVariable::Gamma: return "gamma";
    case SweepVariable::M: return "m";
  }
  return "unknown";
}

inline std::optional<SweepVariable> parse_sweep_variable(std::string_view s) noexcept
{
  for (auto v : { SweepVariable::None, SweepVariable::Eps, SweepVariable::Gamma, SweepVariable::M })
    if (s == to_string(v))
      return v;
  return std::nullopt;
}

struct SweepSpec
{
  SimScenario base;
  SweepVariable variable = SweepVariable::None;
  std::vector<double> values;

  std::vector<SimScenario> cells() const
  {
    if (variable == SweepVariable::None)
      return { base };
    dptl::detail::require<ConfigError>(!values.empty(), "sweep: no values given for the sweep variable");
    std::vector<SimScenario> out;
    for (double v : values) {
      SimScenario s = base;
      switch (variable) {
        case SweepVariable::Eps: s.eps = v; break;
        case SweepVariable::Gamma: s.gamma = v; break;
        case SweepVariable::M:
          dptl::detail::require<ConfigError>(v >= 0.0 && v == std::floor(v), "sweep: m values must be integers");
          s.m = static_cast<std::size_t>(v);
          if (!s.source_total)
            s.source_total = 500;
          break;
        case SweepVariable::None: break;
      }
      out.push_back(std::move(s));
    }
    return out;
  }
};

struct SummaryRow
{
  std::string method;
  double eps = 0.0;
  double gamma = 0.0;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t replications = 0;
  double mean_accuracy = 0.0;
  double se_accuracy = 0.0;
  double mean_f1 = 0.0;
  double mean_excess_risk = 0.0; //!< against the Bayes rule on the test set
  double bayes_gap = 0.0;        //!< Monte Carlo Bayes accuracy minus mean accuracy
  double mean_h = 0.0;
  double mean_w0 = 0.0;
};

struct EvalReport
{
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summary;
  MonteCarloEstimate bayes;
  std::vector<std::string> notes;
};

//! Runs `count` jobs on up to `threads` workers. Results are written by
//! index, so the output does not depend on scheduling.
inline void parallel_for(std::size_t count, std::size_t threads,
                         const std::function<void(std::size_t)>& job)
{
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i)
      job(i);
    return;
  }
  std::atomic<std::size_t> next{ 0 };
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure)
            failure = std::current_exception();
          next = count;
        }
      }
    });
  for (auto& th : pool)
    th.join();
  if (failure)
    std::rethrow_exception(failure);
}

inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows, double bayes_accuracy)
{
  std::vector<SummaryRow> out;
  auto same_cell = [](const ResultRow& r, const SummaryRow& s) {
    return r.method == s.method && r.eps == s.eps && r.gamma == s.gamma && r.m == s.m && r.n == s.n;
  };
  std::vector<std::vector<double>> accs;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& s) { return same_cell(r, s); });
    if (it == out.end()) {
      SummaryRow s;
      s.method = r.method;
      s.eps = r.eps;
      s.gamma = r.gamma;
      s.m = r.m;
      s.n = r.n;
      out.push_back(s);
      accs.emplace_back();
      it = out.end() - 1;
    }
    const auto i = static_cast<std::size_t>(it - out.begin());
    accs[i].push_back(r.accuracy);
    it->replications += 1;
    it->mean_f1 += r.f1;
    it->mean_excess_risk += r.excess_risk;
    it->mean_h += r.h_selected;
    it->mean_w0 += r.w0_selected;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& s = out[i];
    const double N = static_cast<double>(s.replications);
    double mean = 0.0;
    for (double a : accs[i])
      mean += a;
    mean /= N;
    double var = 0.0;
    for (double a : accs[i])
      var += (a - mean) * (a - mean);
    s.mean_accuracy = mean;
    s.se_accuracy = s.replications > 1 ? std::sqrt(var / (N - 1.0) / N) : 0.0;
    s.mean_f1 /= N;
    s.mean_excess_risk /= N;
    s.mean_h /= N;
    s.mean_w0 /= N;
    s.bayes_gap = bayes_accuracy - mean;
  }
  return out;
}

inline constexpr std::string_view kHistogramNote =
  "DT-HIST privatizes each bin with the Gaussian mechanism at L2 sensitivity 1/(n h^d), "
  "sigma = sensitivity * sqrt(2 log(2/delta)) / eps";

//! Every cell of the sweep, `replications` times each. GP factors over the
//! shared test set are built once, sequentially, before the parallel phase.
inline EvalReport run_sweep(const SweepSpec& sweep, std::size_t threads = 1)
{
  const auto cells = sweep.cells();
  for (const auto& c : cells)
    c.validate();
  const auto& base = sweep.base;
  const TestSet test = make_test_set(base.test_size, derive_seed(base.seed, { 0 }));

  SamplerCache cache(make_kernel(base.kernel, base.d), test.x.clamped_to_unit_cube());
  for (const auto& c : cells) {
    dptl::detail::require<ConfigError>(c.kernel == base.kernel && c.test_size == base.test_size &&
                                   c.seed == base.seed,
                                 "sweep: cells must share kernel, test size and seed");
    for (double h : required_bandwidths(c))
      cache.get(h);
  }

  const std::size_t reps = base.replications;
  std::vector<std::vector<ResultRow>> results(cells.size() * reps);
  parallel_for(results.size(), threads, [&](std::size_t i) {
    results[i] = run_replicate(cells[i / reps], i % reps, test, &cache);
  });

  EvalReport report;
  for (auto& r : results)
    for (auto& row : r)
      report.rows.push_back(std::move(row));
  report.bayes = bayes_accuracy(base.bayes_samples, derive_seed(base.seed, { 3 }));
  report.summary = summarize(report.rows, report.bayes.mean);
  if (std::any_of(base.methods.begin(), base.methods.end(), [](Method m) { return m == Method::DTHist; }))
    report.notes.emplace_back(kHistogramNote);
  if (base.kernel == KernelFamily::Gaussian)
    report.notes.emplace_back("Gaussian kernel is not compactly supported; the theory assumes compact support");
  return report;
}

// ---------------------------------------------------------------------------
// Real multi-server data

struct RealDataScenario
{
  std::vector<io::TabularSource> sources; //!< the first source is the target
  io::TableSchema schema;
  io::PreprocessConfig preprocess;
  std::size_t test_size = 150;
  std::vector<double> eps_values{ 5.0 };
  std::optional<double> delta; //!< default n_j^{-2} per server
  std::size_t replications = 50;
  std::uint64_t seed = 20240101;
  KernelFamily kernel = KernelFamily::Triangular;
  std::vector<Method> methods{ Method::AdaptAll, Method::AdaptTar, Method::AdaptSamp, Method::AdaptHomog };
  adaptive::SessionOptions session;
};

struct Prediction
{
  std::string method;
  double eps = 0.0;
  std::size_t replicate = 0;
  std::size_t row = 0; //!< index into the replicate's test split
  int label = 0;
  int truth = 0;
};

struct RealDataReport
{
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summary;
  std::vector<Prediction> predictions;
  double majority_baseline = 0.0; //!< mean test accuracy of the majority class
  std::vector<std::string> server_labels;
  std::vector<std::size_t> train_sizes; //!< sizes after the target holdout
  std::vector<std::size_t> dropped;
  std::vector<double> prevalences; //!< training prevalence per server, first replicate
  std::vector<std::string> notes;
};

//! Adaptive procedures on loaded tables. Each replicate draws a fresh target
//! holdout, fits the pooled scaling on training rows only, and runs one
//! adaptive session per privacy level; noise seeds depend on the replicate
//! only, so privacy levels are compared on common random numbers.
inline RealDataReport run_real_data(const RealDataScenario& sc, std::span<const io::RawTable> tables,
                                    std::size_t threads = 1)
{
  dptl::detail::require<ConfigError>(tables.size() >= 1, "real data: need at least the target table");
  dptl::detail::require<ConfigError>(sc.replications >= 1, "real data: need at least one replication");
  dptl::detail::require<ConfigError>(!sc.eps_values.empty(), "real data: no privacy levels");
  for (double e : sc.eps_values)
    dptl::detail::require<ConfigError>(e > 0.0, "real data: eps must be positive");
  for (auto m : sc.methods)
    dptl::detail::require<ConfigError>(is_adaptive(m) && m != Method::AdaptDTK,
                                       "real data: only AdaptAll, AdaptTar, AdaptSamp and AdaptHomog apply");
  const std::size_t d = tables.front().covariates.size();
  const auto spec = make_kernel(sc.kernel, d);

  struct RepOut
  {
    std::vector<ResultRow> rows;
    std::vector<Prediction> preds;
    double majority = 0.0;
    std::vector<std::size_t> sizes;
    std::vector<double> prevalences;
  };
  std::vector<RepOut> reps(sc.replications);
  parallel_for(sc.replications, threads, [&](std::size_t rep) {
    auto parts = io::split(tables.front(), sc.test_size, derive_seed(sc.seed, { 1, rep }));
    std::vector<io::RawTable> train{ parts.train };
    for (std::size_t k = 1; k < tables.size(); ++k)
      train.push_back(tables[k]);
    const auto prep = io::preprocess(train, sc.preprocess);
    const Points test_x = prep.scaling.apply(parts.test);
    const auto& y = parts.test.labels;

    RepOut& out = reps[rep];
    const double p = io::prevalence(y);
    out.majority = std::max(p, 1.0 - p);
    for (const auto& s : prep.servers) {
      out.sizes.push_back(s.size());
      out.prevalences.push_back(io::prevalence(s.labels));
    }

    for (double eps : sc.eps_values) {
      std::vector<PrivacyBudget> budgets;
      for (const auto& s : prep.servers) {
        PrivacyBudget b;
        b.epsilon = eps;
        const double nj = static_cast<double>(s.size());
        b.delta = std::isinf(eps) ? 0.0 : sc.delta.value_or(1.0 / (nj * nj));
        budgets.push_back(b);
      }
      const adaptive::AdaptiveSession session(prep.servers, spec, budgets, test_x,
                                              derive_seed(sc.seed, { 2, rep }), sc.session);
      for (auto& o : adaptive_methods(session, sc.methods)) {
        ResultRow r;
        r.method = std::string(to_string(o.method));
        r.eps = eps;
        r.gamma = std::numeric_limits<double>::quiet_NaN();
        r.m = prep.servers.size() - 1;
        r.n = prep.servers.front().size();
        r.replicate = rep;
        r.accuracy = accuracy(o.predictions, y);
        r.f1 = f1_score(o.predictions, y);
        r.excess_risk = std::numeric_limits<double>::quiet_NaN();
        r.h_selected = o.h_selected;
        r.w0_selected = o.w0_selected;
        out.rows.push_back(std::move(r));
        for (std::size_t q = 0; q < y.size(); ++q)
          out.preds.push_back({ std::string(to_string(o.method)), eps, rep, q, o.predictions[q], y[q] });
      }
    }
  });

  RealDataReport report;
  for (const auto& t : tables) {
    report.server_labels.push_back(t.server_label);
    report.dropped.push_back(t.dropped);
  }
  report.train_sizes = reps.front().sizes;
  report.prevalences = reps.front().prevalences;
  for (auto& r : reps) {
    report.majority_baseline += r.majority / static_cast<double>(reps.size());
    for (auto& row : r.rows)
      report.rows.push_back(std::move(row));
    for (auto& pr : r.preds)
      report.predictions.push_back(std::move(pr));
  }
  report.summary = summarize(report.rows, std::numeric_limits<double>::quiet_NaN());
  report.notes.emplace_back("covariates scaled to [0, " + std::to_string(sc.preprocess.upper) +
                            "] with min/max pooled over training rows of all servers");
  if (sc.preprocess.recenter)
    report.notes.emplace_back("labels centered at each server's training prevalence");
  return report;
}

} // namespace dptl::sim
