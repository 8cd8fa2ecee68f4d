#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace dptl::rates {

enum class Regime
{
  Trivial, //!< no classifier beats random guessing
  NPt,     //!< non-private target rate
  Pt,      //!< private target rate
  NPs,     //!< non-private source rate
  Ps,      //!< private source rate
  Mixed    //!< sources split between private and non-private branches
};

inline std::string_view to_string(Regime r) noexcept
{
  switch (r) {
    case Regime::Trivial: return "Trivial";
    case Regime::NPt: return "NPt";
    case Regime::Pt: return "Pt";
    case Regime::NPs: return "NPs";
    case Regime::Ps: return "Ps";
    case Regime::Mixed: return "Mixed";
  }
  return "?";
}

//! Heterogeneous problem: server 0 is the target, servers 1..m the sources.
//! eps entries may be +inf (public server).
struct ProblemParams
{
  std::vector<double> n;     //!< m + 1 sample sizes
  std::vector<double> eps;   //!< m + 1 privacy budgets
  std::vector<double> gamma; //!< m relative signal exponents
  double beta = 1.0;
  double alpha = 0.0;
  std::size_t d = 1;

  std::size_t m() const noexcept { return n.empty() ? 0 : n.size() - 1; }

  void validate() const
  {
    if (n.empty())
      throw InputError("ProblemParams: at least the target sample size is required");
    if (eps.size() != n.size())
      throw InputError("ProblemParams: eps must have one entry per server");
    if (gamma.size() != m())
      throw InputError("ProblemParams: gamma must have one entry per source");
    for (double v : n)
      if (!(v >= 1.0))
        throw InputError("ProblemParams: sample sizes must be >= 1");
    for (double e : eps)
      if (!(e > 0.0))
        throw InputError("ProblemParams: budgets must be positive");
    for (double g : gamma)
      if (!(g > 0.0))
        throw InputError("ProblemParams: gamma must be positive");
    if (!(beta > 0.0 && beta <= 1.0))
      throw InputError("ProblemParams: beta must lie in (0, 1]");
    if (!(alpha >= 0.0))
      throw InputError("ProblemParams: alpha must be non-negative");
    if (d < 1)
      throw InputError("ProblemParams: d must be positive");
    if (alpha * beta > static_cast<double>(d))
      throw ScopeError("ProblemParams: alpha * beta must not exceed d");
  }
};

//! Regime endpoints of the homogeneous phase diagram.
struct Endpoints
{
  double eps1 = 0;       //!< below: random guessing
  double eps2 = 0;       //!< target private / non-private crossover
  double eps3 = 0;       //!< source private / non-private crossover
  double eps11 = 0;      //!< private target vs. private source crossover
  double eps21 = 0;      //!< non-private target vs. private source crossover
  double gamma_star = 0; //!< non-private target vs. non-private source crossover in gamma
};

struct RateSolution
{
  double r = 1.0;           //!< root of the bandwidth equation
  double excess_risk = 1.0; //!< r^{beta (1 + alpha)}, before log factors
  Regime regime = Regime::Trivial;
  std::optional<Endpoints> endpoints; //!< set for homogeneous inputs
  bool clamped = false;               //!< root fell outside the bisection bracket
  double residual = 0.0;              //!< |LHS(r) - rhs| / rhs
  int iterations = 0;
};

namespace detail {

inline double server_precision(double n, double eps, double r, double d) noexcept
{
  // n ∧ n^2 eps^2 r^d, written so that eps = inf gives n
  if (std::isinf(eps))
    return n;
  return std::min(n, n * n * eps * eps * std::pow(r, d));
}

inline bool private_branch(double n, double eps, double r, double d) noexcept
{
  return !std::isinf(eps) && n * n * eps * eps * std::pow(r, d) < n;
}

inline bool all_equal(std::span<const double> v) noexcept
{
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

} // namespace detail

//! Left-hand side of the bandwidth equation:
//!   (n_0 ∧ n_0^2 eps_0^2 r^d) r^{2 beta + d} + sum_j (n_j ∧ n_j^2 eps_j^2 r^d) r^{2 beta gamma_j + d}
inline double rate_equation_lhs(const ProblemParams& p, double r)
{
  const double d = static_cast<double>(p.d);
  double lhs = detail::server_precision(p.n[0], p.eps[0], r, d) * std::pow(r, 2 * p.beta + d);
  for (std::size_t j = 1; j <= p.m(); ++j)
    lhs += detail::server_precision(p.n[j], p.eps[j], r, d) *
           std::pow(r, 2 * p.beta * p.gamma[j - 1] + d);
  return lhs;
}

//! Endpoints for n_j = n, gamma_j = gamma and a common budget on every server.
//!
//! eps21 is the crossing of the non-private target term n_0^{-1/(2b+d)}
//! with the private source term (sqrt(m) n eps)^{-1/(b gamma + d)}, which
//! gives the exponent (b gamma + d) / (2b + d) on n_0.
inline Endpoints homogeneous_endpoints(double n0, double m, double n, double gamma,
                                       double beta, double d)
{
  dptl::detail::require<InputError>(m >= 1, "homogeneous_endpoints: m must be at least 1");
  Endpoints e;
  const double sqrt_m_n = std::sqrt(m) * n;
  e.gamma_star = ((2 * beta + d) * std::log(m * n) / std::log(n0) - d) / (2 * beta);
  e.eps1 = std::min(1.0 / sqrt_m_n, 1.0 / n0);
  e.eps2 = std::pow(n0, -beta / (2 * beta + d));
  e.eps3 = std::pow(std::pow(m, d / 2) * std::pow(n, -beta * gamma), 1.0 / (2 * beta * gamma + d));
  if (gamma != 1.0) {
    const double log_base = (beta + d) * std::log(sqrt_m_n) - (beta * gamma + d) * std::log(n0);
    e.eps11 = std::exp(log_base / (beta * (gamma - 1)));
  } else {
    e.eps11 = n0 <= std::sqrt(m * n * n) ? e.eps1 : e.eps2;
  }
  e.eps21 = std::pow(n0, (beta * gamma + d) / (2 * beta + d)) / sqrt_m_n;
  return e;
}

//! Root r of rate_equation_lhs(r) = rhs by bisection on log r over
//! [DBL_MIN^{1/4}, 1]. If LHS(1) < rhs the root is clamped to 1.
inline RateSolution solve_rate_equation(const ProblemParams& p, double rhs = 1.0)
{
  p.validate();
  dptl::detail::require<InputError>(rhs > 0.0, "solve_rate_equation: rhs must be positive");
  constexpr double rel_tol = 1e-12;
  constexpr int max_iter = 200;

  RateSolution sol;
  double lo = std::pow(std::numeric_limits<double>::min(), 0.25);
  double hi = 1.0;
  if (rate_equation_lhs(p, hi) < rhs) {
    sol.r = hi;
    sol.clamped = true;
  } else if (rate_equation_lhs(p, lo) >= rhs) {
    sol.r = lo;
    sol.clamped = true;
  } else {
    int it = 0;
    while (it < max_iter && (hi - lo) > rel_tol * hi) {
      const double mid = std::sqrt(lo * hi);
      if (rate_equation_lhs(p, mid) < rhs)
        lo = mid;
      else
        hi = mid;
      ++it;
    }
    sol.iterations = it;
    sol.r = std::sqrt(lo * hi);
  }
  sol.residual = std::abs(rate_equation_lhs(p, sol.r) - rhs) / rhs;
  sol.excess_risk = std::min(1.0, std::pow(sol.r, p.beta * (1 + p.alpha)));

  // governing term: target vs. the source group at the root
  const double d = static_cast<double>(p.d);
  if (sol.clamped && sol.r >= 1.0) {
    sol.regime = Regime::Trivial;
  } else {
    const double target = detail::server_precision(p.n[0], p.eps[0], sol.r, d) *
                          std::pow(sol.r, 2 * p.beta + d);
    double sources = 0.0;
    bool any_private = false, any_public = false;
    for (std::size_t j = 1; j <= p.m(); ++j) {
      sources += detail::server_precision(p.n[j], p.eps[j], sol.r, d) *
                 std::pow(sol.r, 2 * p.beta * p.gamma[j - 1] + d);
      (detail::private_branch(p.n[j], p.eps[j], sol.r, d) ? any_private : any_public) = true;
    }
    if (target >= sources)
      sol.regime = detail::private_branch(p.n[0], p.eps[0], sol.r, d) ? Regime::Pt : Regime::NPt;
    else if (any_private && any_public)
      sol.regime = Regime::Mixed;
    else
      sol.regime = any_private ? Regime::Ps : Regime::NPs;
  }

  if (p.m() >= 1) {
    std::span<const double> src_n(p.n.data() + 1, p.m());
    std::span<const double> all_eps(p.eps);
    if (detail::all_equal(src_n) && detail::all_equal(all_eps) && detail::all_equal(p.gamma) &&
        !std::isinf(p.eps[0]))
      sol.endpoints = homogeneous_endpoints(p.n[0], static_cast<double>(p.m()), p.n[1],
                                            p.gamma[0], p.beta, d);
  }
  return sol;
}

//! Homogeneous setting: target (n0, eps0); m sources with common (n, eps, gamma).
struct HomogeneousParams
{
  double n0 = 1;
  double m = 0;
  double n = 1;
  double eps0 = std::numeric_limits<double>::infinity();
  double eps = std::numeric_limits<double>::infinity();
  double gamma = 1;
  double beta = 1;
  double alpha = 0;
  double d = 1;

  ProblemParams general() const
  {
    ProblemParams p;
    const auto mm = static_cast<std::size_t>(m);
    p.n.assign(mm + 1, n);
    p.n[0] = n0;
    p.eps.assign(mm + 1, eps);
    p.eps[0] = eps0;
    p.gamma.assign(mm, gamma);
    p.beta = beta;
    p.alpha = alpha;
    p.d = static_cast<std::size_t>(d);
    return p;
  }
};

namespace detail {

// Effective-size terms n_0^{1/(2b+d)} ∧ (n_0 eps_0)^{1/(b+d)} and the source analogue.
inline double target_scale(const HomogeneousParams& h) noexcept
{
  const double np = std::pow(h.n0, 1.0 / (2 * h.beta + h.d));
  if (std::isinf(h.eps0))
    return np;
  return std::min(np, std::pow(h.n0 * h.n0 * h.eps0 * h.eps0, 1.0 / (2 * h.beta + 2 * h.d)));
}

inline double source_scale(const HomogeneousParams& h) noexcept
{
  if (h.m <= 0)
    return 0.0;
  const double np = std::pow(h.m * h.n, 1.0 / (2 * h.beta * h.gamma + h.d));
  if (std::isinf(h.eps))
    return np;
  return std::min(np, std::pow(h.m * h.n * h.n * h.eps * h.eps,
                               1.0 / (2 * h.beta * h.gamma + 2 * h.d)));
}

} // namespace detail

//! Minimax rate under source homogeneity, ignoring the log factor:
//!   min(1, [ (n_0^{1/(2b+d)} ∧ (n_0^2 e_0^2)^{1/(2b+2d)})
//!          + ((mn)^{1/(2bg+d)} ∧ (mn^2 e^2)^{1/(2bg+2d)}) ]^{-b(1+a)})
inline double homogeneous_rate(const HomogeneousParams& h)
{
  const double s = detail::target_scale(h) + detail::source_scale(h);
  return std::min(1.0, std::pow(s, -h.beta * (1 + h.alpha)));
}

//! The same rate written as the minimum over target/source of the worse of
//! the non-private and private terms. Equals homogeneous_rate up to a factor
//! of at most 2^{b(1+a)}.
inline double homogeneous_rate_four_term(const HomogeneousParams& h)
{
  const double s = std::max(detail::target_scale(h), detail::source_scale(h));
  return std::min(1.0, std::pow(s, -h.beta * (1 + h.alpha)));
}

//! Log-factor inflation (log(1/delta))^{b(1+a)/(2b(gamma ∧ 1)+d)} reported
//! alongside bare rates. An order bound, not a tight constant.
inline double log_factor(double delta, double beta, double alpha, double gamma_min, double d)
{
  dptl::detail::require<InputError>(delta > 0.0 && delta < 1.0, "log_factor: delta must lie in (0, 1)");
  return std::pow(std::log(1.0 / delta),
                  beta * (1 + alpha) / (2 * beta * std::min(gamma_min, 1.0) + d));
}

enum class GammaBand
{
  AtMostOne,    //!< gamma in (0, 1]
  Intermediate, //!< gamma in (1, gamma*]
  AboveStar     //!< gamma in (gamma*, inf)
};

inline std::string_view to_string(GammaBand b) noexcept
{
  switch (b) {
    case GammaBand::AtMostOne: return "gamma<=1";
    case GammaBand::Intermediate: return "1<gamma<=gamma*";
    case GammaBand::AboveStar: return "gamma>gamma*";
  }
  return "?";
}

//! Location of (eps, gamma) in the phase diagram.
struct RegimeCell
{
  Regime regime = Regime::Trivial;
  int column = 0; //!< 0: (0,e1]  1: (e1,e2]  2: (e2,e3]  3: (e3,inf)
  GammaBand band = GammaBand::AtMostOne;
  Endpoints endpoints;
};

//! Phase-diagram cell for equal budgets on all servers, n_j = n, gamma_j = gamma
//! and n <= n0 <= m n. Column boundaries are half-open on the left,
//! (e_k, e_{k+1}], and are matched first-to-last.
inline RegimeCell classify_regime(double n0, double m, double n, double eps, double gamma,
                                  double beta, double d)
{
  if (!(m >= 1))
    throw ScopeError("classify_regime: needs at least one source server");
  if (!(n <= n0 && n0 <= m * n))
    throw ScopeError("classify_regime: requires n <= n0 <= m*n (got n=" + std::to_string(n) +
                     ", n0=" + std::to_string(n0) + ", m*n=" + std::to_string(m * n) + ")");
  if (!(eps > 0.0) || !(gamma > 0.0))
    throw InputError("classify_regime: eps and gamma must be positive");

  RegimeCell cell;
  cell.endpoints = homogeneous_endpoints(n0, m, n, gamma, beta, d);
  const Endpoints& e = cell.endpoints;
  cell.band = gamma <= 1.0            ? GammaBand::AtMostOne
              : gamma <= e.gamma_star ? GammaBand::Intermediate
                                      : GammaBand::AboveStar;
  cell.column = eps <= e.eps1 ? 0 : eps <= e.eps2 ? 1 : eps <= e.eps3 ? 2 : 3;

  switch (cell.column) {
    case 0:
      cell.regime = Regime::Trivial;
      break;
    case 1:
      if (cell.band == GammaBand::AtMostOne)
        cell.regime = eps <= e.eps11 ? Regime::Pt : Regime::Ps;
      else
        cell.regime = eps <= e.eps11 ? Regime::Ps : Regime::Pt;
      break;
    case 2:
      if (cell.band == GammaBand::AtMostOne)
        cell.regime = Regime::NPs;
      else if (cell.band == GammaBand::Intermediate)
        cell.regime = eps <= e.eps21 ? Regime::NPt : Regime::Ps;
      else
        cell.regime = Regime::NPt;
      break;
    default:
      cell.regime = cell.band == GammaBand::AboveStar ? Regime::NPt : Regime::NPs;
      break;
  }
  return cell;
}

inline RegimeCell classify_regime(const HomogeneousParams& h)
{
  return classify_regime(h.n0, h.m, h.n, h.eps, h.gamma, h.beta, h.d);
}

//! Governing term read directly off the four-term form: the target and
//! source rates are each the worse of their non-private and private terms,
//! and the overall rate is the better of the two. Ties go to the private
//! term and to the target.
inline Regime dominant_term_regime(const HomogeneousParams& h)
{
  const double b = h.beta, d = h.d;
  // log of the rates without the common b(1+a) factor
  const double np_t = -std::log(h.n0) / (2 * b + d);
  const double p_t = std::isinf(h.eps0) ? -std::numeric_limits<double>::infinity() : -std::log(h.n0 * h.eps0) / (b + d);
  const bool target_private = p_t >= np_t;
  const double target = std::max(np_t, p_t);
  double source = std::numeric_limits<double>::infinity();
  bool source_private = false;
  if (h.m >= 1) {
    const double np_s = -std::log(h.m * h.n) / (2 * b * h.gamma + d);
    const double p_s = std::isinf(h.eps) ? -std::numeric_limits<double>::infinity()
                                         : -std::log(std::sqrt(h.m) * h.n * h.eps) / (b * h.gamma + d);
    source_private = p_s >= np_s;
    source = std::max(np_s, p_s);
  }
  const double best = std::min(target, source);
  if (best >= 0.0)
    return Regime::Trivial;
  if (target <= source)
    return target_private ? Regime::Pt : Regime::NPt;
  return source_private ? Regime::Ps : Regime::NPs;
}

struct RateCurvePoint
{
  double eps = 0;
  double rate = 1;
  double log_rate = 0;
  Regime regime = Regime::Trivial;
  std::optional<Endpoints> endpoints;
};

//! Rate against a common budget eps (applied to target and sources). Uses the
//! phase diagram when its scope conditions hold, the four-term argmin otherwise.
inline std::vector<RateCurvePoint> rate_curve(HomogeneousParams base, std::span<const double> eps_grid)
{
  std::vector<RateCurvePoint> out;
  out.reserve(eps_grid.size());
  const bool in_scope = base.m >= 1 && base.n <= base.n0 && base.n0 <= base.m * base.n;
  for (double e : eps_grid) {
    dptl::detail::require<InputError>(e > 0.0, "rate_curve: eps must be positive");
    HomogeneousParams h = base;
    h.eps0 = e;
    h.eps = e;
    RateCurvePoint pt;
    pt.eps = e;
    pt.rate = homogeneous_rate(h);
    pt.log_rate = std::log(pt.rate);
    if (in_scope) {
      const RegimeCell cell = classify_regime(h);
      pt.regime = cell.regime;
      pt.endpoints = cell.endpoints;
    } else {
      pt.regime = dominant_term_regime(h);
    }
    out.push_back(pt);
  }
  return out;
}

struct PublicSourceRate
{
  double rate = 1;
  std::string case_label; //!< "1", "2a", "2b", "2c", "3a", "3b"
};

//! Rate with one public source (server 1, eps_1 = inf) and one private source
//! (server 2) sharing the target budget eps, gamma_1 = gamma_2 = gamma.
//! Requires n2 > n0^{(2bg+d)/(2b+d)}.
inline PublicSourceRate public_source_rate(double n0, double n1, double n2, double eps,
                                           double gamma, double beta, double alpha, double d)
{
  const double bg = beta * gamma;
  const double pivot = std::pow(n0, (2 * bg + d) / (2 * beta + d));
  if (!(n2 > pivot))
    throw ScopeError("public_source_rate: requires n2 > n0^{(2 beta gamma + d)/(2 beta + d)}");
  dptl::detail::require<InputError>(eps > 0.0, "public_source_rate: eps must be positive");
  const double expo = beta * (1 + alpha);
  const double public_rate = std::pow(n1, -expo / (2 * bg + d));

  if (n1 > n2)
    return { public_rate, "1" };

  if (n1 >= pivot) {
    const double lower = std::pow(n1, (bg + d) / (2 * bg + d)) / n2;
    // the printed lower limit of the last branch, n2^{-(bg+d)/(2bg+d)}, does not
    // meet the upper limit of the middle one; both use n2^{-bg/(2bg+d)} here
    const double upper = std::pow(n2, -bg / (2 * bg + d));
    if (eps <= lower)
      return { public_rate, "2a" };
    if (eps <= upper)
      return { std::pow(n2 * n2 * eps * eps, -expo / (2 * bg + 2 * d)), "2b" };
    return { std::pow(n2, -expo / (2 * bg + d)), "2c" };
  }

  const double n_tilde = std::min(std::pow(n0, 1.0 / (2 * beta + d)),
                                  std::pow(n2, gamma / (2 * bg + d)));
  if (eps <= std::pow(n_tilde, -beta))
    return { public_rate, "3a" };
  HomogeneousParams h;
  h.n0 = n0;
  h.m = 1;
  h.n = n2;
  h.eps0 = eps;
  h.eps = eps;
  h.gamma = gamma;
  h.beta = beta;
  h.alpha = alpha;
  h.d = d;
  return { homogeneous_rate(h), "3b" };
}

} // namespace dptl::rates
