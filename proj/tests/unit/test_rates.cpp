#include <dptl/rates.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace dptl;
using namespace dptl::rates;

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

ProblemParams single(double n0, double eps0, double beta, std::size_t d, double alpha = 0.0)
{
  ProblemParams p;
  p.n = { n0 };
  p.eps = { eps0 };
  p.beta = beta;
  p.alpha = alpha;
  p.d = d;
  return p;
}

HomogeneousParams homog(double n0, double m, double n, double eps, double gamma, double beta, double d,
                        double alpha = 0.0)
{
  HomogeneousParams h;
  h.n0 = n0;
  h.m = m;
  h.n = n;
  h.eps0 = eps;
  h.eps = eps;
  h.gamma = gamma;
  h.beta = beta;
  h.alpha = alpha;
  h.d = d;
  return h;
}

// log of the four bare rates (common factor b(1+a) dropped), written out
// from the homogeneous minimax formula
struct FourTerms
{
  double np_t, p_t, np_s, p_s;
};

FourTerms four_terms(const HomogeneousParams& h)
{
  const double b = h.beta, d = h.d, g = h.gamma;
  return { -std::log(h.n0) / (2 * b + d), -std::log(h.n0 * h.n0 * h.eps0 * h.eps0) / (2 * b + 2 * d),
           -std::log(h.m * h.n) / (2 * b * g + d), -std::log(h.m * h.n * h.n * h.eps * h.eps) / (2 * b * g + 2 * d) };
}

} // namespace

TEST(Solver, PublicSingleServerClosedForm)
{
  const auto s = solve_rate_equation(single(1024, kInfinity, 0.5, 1));
  EXPECT_NEAR(s.r, 0.03125, 1e-12 * 0.03125);
  EXPECT_LE(s.residual, 1e-9);
  EXPECT_EQ(s.regime, Regime::NPt);
  EXPECT_FALSE(s.clamped);
}

TEST(Solver, PrivateBranchClosedForm)
{
  // n0 eps0 = 10: private root 10^{-1/(b+d)} = 10^{-2/3} beats n0^{-1/2} = 0.01
  const auto s = solve_rate_equation(single(1e4, 1e-3, 0.5, 1));
  EXPECT_NEAR(s.r, 0.21544346900318834, 1e-10);
  EXPECT_EQ(s.regime, Regime::Pt);
  EXPECT_LT(1e4 * 1e4 * 1e-6 * s.r, 1e4);
}

TEST(Solver, ClampsWhenNoRootBelowOne)
{
  const auto s = solve_rate_equation(single(100, 1e-3, 0.5, 1));
  EXPECT_TRUE(s.clamped);
  EXPECT_EQ(s.r, 1.0);
  EXPECT_EQ(s.excess_risk, 1.0);
  EXPECT_EQ(s.regime, Regime::Trivial);
}

TEST(Solver, RandomClosedFormBranches)
{
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    const double beta = 0.05 + 0.95 * u(rng);
    const std::size_t d = 1 + rng() % 4;
    const double n0 = std::floor(std::pow(10.0, 1 + 5 * u(rng)));
    const double eps0 = u(rng) < 0.3 ? kInfinity : std::pow(10.0, -4 + 5 * u(rng));
    if (!std::isinf(eps0) && n0 * eps0 < 1.0)
      continue;
    const double r_np = std::pow(n0, -1.0 / (2 * beta + d));
    const double r_p = std::isinf(eps0) ? 0.0 : std::pow(n0 * eps0, -1.0 / (beta + d));
    const double expect = std::max(r_np, r_p);
    const auto s = solve_rate_equation(single(n0, eps0, beta, d));
    EXPECT_NEAR(s.r / expect, 1.0, 1e-9);
    EXPECT_LE(s.residual, 1e-9);
  }
}

TEST(Solver, EqualExponentSourcesPool)
{
  // public servers with gamma = 1: (sum n_j) r^{2b+d} = 1
  ProblemParams p;
  p.n = { 300, 500, 1200 };
  p.eps.assign(3, kInfinity);
  p.gamma = { 1.0, 1.0 };
  p.beta = 0.4;
  p.d = 3;
  EXPECT_NEAR(solve_rate_equation(p).r, std::pow(2000.0, -1.0 / 3.8), 1e-12);
}

TEST(Solver, MonotoneInSizesAndBudgets)
{
  ProblemParams p;
  p.n = { 400, 300, 800 };
  p.eps = { 0.5, 0.2, 1.0 };
  p.gamma = { 1.5, 0.7 };
  p.beta = 0.6;
  p.d = 2;
  const double r = solve_rate_equation(p).r;
  for (std::size_t j = 0; j < 3; ++j) {
    auto q = p;
    q.n[j] *= 2;
    EXPECT_LT(solve_rate_equation(q).r, r);
    q = p;
    q.eps[j] *= 2;
    EXPECT_LE(solve_rate_equation(q).r, r);
  }
  auto all = p;
  for (auto& n : all.n)
    n *= 2;
  EXPECT_LT(solve_rate_equation(all).r, r);
}

TEST(Solver, RhsShiftsRoot)
{
  const auto p = single(5000, kInfinity, 0.5, 2);
  EXPECT_NEAR(solve_rate_equation(p, 8.0).r, std::pow(8.0 / 5000.0, 1.0 / 3.0), 1e-12);
  EXPECT_THROW(solve_rate_equation(p, 0.0), InputError);
}

TEST(Solver, DistributionPenalty)
{
  // pooled source size fixed, private source branch active: more servers, larger r
  double prev = 0.0;
  for (std::size_t m : { 1u, 2u, 4u, 8u, 16u }) {
    ProblemParams p;
    p.n.assign(m + 1, 4000.0 / m);
    p.n[0] = 50;
    p.eps.assign(m + 1, 0.05);
    p.gamma.assign(m, 1.0);
    p.beta = 0.5;
    p.d = 2;
    const auto s = solve_rate_equation(p);
    EXPECT_EQ(s.regime, Regime::Ps);
    EXPECT_GT(s.r, prev);
    prev = s.r;
  }
}

TEST(Params, Validation)
{
  auto p = single(100, 1.0, 0.5, 1);
  p.alpha = 3.0;
  EXPECT_THROW(p.validate(), ScopeError);
  p = single(0.5, 1.0, 0.5, 1);
  EXPECT_THROW(p.validate(), InputError);
  p = single(100, 1.0, 1.5, 1);
  EXPECT_THROW(p.validate(), InputError);
  p = single(100, 1.0, 0.5, 1);
  p.gamma = { 1.0 };
  EXPECT_THROW(p.validate(), InputError);
}

TEST(HomogeneousRate, SingleServerPublic)
{
  auto h = homog(2000, 0, 1, kInfinity, 1, 0.5, 2, 1.0);
  EXPECT_NEAR(homogeneous_rate(h), std::pow(2000.0, -1.0 / 3.0), 1e-14);
}

TEST(HomogeneousRate, NonPrivateTransferRemark)
{
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 500; ++rep) {
    const double m = 1 + rng() % 20, n = std::floor(std::pow(10.0, 1 + 3 * u(rng)));
    const double n0 = std::floor(std::pow(10.0, 1 + 3 * u(rng)));
    const double beta = 0.1 + 0.9 * u(rng), d = 1 + rng() % 3, g = 0.2 + 3 * u(rng), alpha = u(rng);
    const double e3 = std::pow(std::pow(m, d / 2) * std::pow(n, -beta * g), 1.0 / (2 * beta * g + d));
    const double e2 = std::pow(n0, -beta / (2 * beta + d));
    const double eps = std::max(e2, e3) * (1 + 2 * u(rng));
    const auto h = homog(n0, m, n, eps, g, beta, d, alpha);
    const double remark = std::pow(n0 + std::pow(m * n, (2 * beta + d) / (2 * beta * g + d)),
                                   -beta * (1 + alpha) / (2 * beta + d));
    const double ratio = homogeneous_rate(h) / std::min(1.0, remark);
    EXPECT_LE(std::abs(std::log(ratio)), beta * (1 + alpha) * std::log(2.0) + 1e-12);
  }
}

TEST(HomogeneousRate, AgreesWithSolverUpToConstant)
{
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 500; ++rep) {
    HomogeneousParams h;
    h.m = static_cast<double>(rng() % 10);
    h.n = 1 + std::floor(std::pow(10.0, 4 * u(rng)));
    h.n0 = 1 + std::floor(std::pow(10.0, 4 * u(rng)));
    h.beta = 0.05 + 0.95 * u(rng);
    h.d = static_cast<double>(1 + rng() % 4);
    h.alpha = u(rng);
    h.gamma = 0.1 + 4 * u(rng);
    h.eps0 = std::pow(10.0, -5 + 6 * u(rng));
    h.eps = std::pow(10.0, -5 + 6 * u(rng));
    const double a = homogeneous_rate(h);
    const double b = solve_rate_equation(h.general()).excess_risk;
    const double e = h.beta * (1 + h.alpha);
    EXPECT_LE(std::abs(std::log(a / b)), e * std::log(4.0) + 1e-12);
    EXPECT_LE(std::abs(std::log(a / homogeneous_rate_four_term(h))), e * std::log(2.0) + 1e-12);
  }
}

TEST(Endpoints, FormulasEvaluatedDirectly)
{
  const double n0 = 1000, m = 4, n = 500, g = 1.5, b = 0.25, d = 2;
  const auto e = homogeneous_endpoints(n0, m, n, g, b, d);
  EXPECT_NEAR(e.gamma_star, ((2 * b + d) * std::log(m * n) / std::log(n0) - d) / (2 * b), 1e-12);
  EXPECT_NEAR(e.eps1, std::min(1.0 / (2.0 * 500), 1.0 / 1000), 1e-15);
  EXPECT_NEAR(e.eps2, std::pow(1000.0, -0.25 / 2.5), 1e-15);
  EXPECT_NEAR(e.eps3, std::pow(std::pow(4.0, 1.0) * std::pow(500.0, -0.375), 1.0 / 2.75), 1e-15);
  EXPECT_NEAR(e.eps11, std::pow(std::pow(1000.0, 2.25) * std::pow(1000.0, -2.375), 1.0 / 0.125), 1e-12);
  EXPECT_NEAR(e.eps21, std::pow(1000.0, 2.375 / 2.5) / 1000.0, 1e-12);
}

TEST(Endpoints, AreCrossingsOfTheFourRates)
{
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    const double m = 1 + rng() % 30, n = std::floor(std::pow(10.0, 1 + 3 * u(rng)));
    const double n0 = std::floor(n + u(rng) * (m * n - n));
    const double b = 0.1 + 0.9 * u(rng), d = 1 + rng() % 3;
    double g = 0.2 + 3 * u(rng);
    if (std::abs(g - 1) < 0.2)
      g = 1.5;
    const auto e = homogeneous_endpoints(n0, m, n, g, b, d);
    auto at = [&](double eps) { return four_terms(homog(n0, m, n, eps, g, b, d)); };
    const double tol = 1e-9;
    auto t = at(e.eps2);
    EXPECT_NEAR(t.np_t, t.p_t, tol);
    t = at(e.eps3);
    EXPECT_NEAR(t.np_s, t.p_s, tol);
    if (e.eps11 > 1e-200 && e.eps11 < 1e200) {
      t = at(e.eps11);
      EXPECT_NEAR(t.p_t, t.p_s, tol);
    }
    t = at(e.eps21);
    EXPECT_NEAR(t.np_t, t.p_s, tol);
    const auto gs = four_terms(homog(n0, m, n, 1.0, e.gamma_star, b, d));
    EXPECT_NEAR(gs.np_t, gs.np_s, tol);
  }
}

TEST(Endpoints, UnitGammaCases)
{
  const auto lo = homogeneous_endpoints(300, 4, 200, 1.0, 0.5, 2);
  EXPECT_EQ(lo.eps11, lo.eps1); // n0 <= sqrt(m) n
  const auto hi = homogeneous_endpoints(700, 4, 200, 1.0, 0.5, 2);
  EXPECT_EQ(hi.eps11, hi.eps2);
}

TEST(PhaseDiagram, ScopeErrors)
{
  EXPECT_THROW(classify_regime(100, 0, 50, 0.5, 1, 0.5, 2), ScopeError);
  EXPECT_THROW(classify_regime(40, 4, 50, 0.5, 1, 0.5, 2), ScopeError);
  EXPECT_THROW(classify_regime(300, 4, 50, 0.5, 1, 0.5, 2), ScopeError);
  EXPECT_NO_THROW(classify_regime(200, 4, 50, 0.5, 1, 0.5, 2));
}

TEST(PhaseDiagram, HalfOpenColumns)
{
  const double n0 = 1000, m = 4, n = 500, g = 0.5, b = 0.25, d = 2;
  const auto e = homogeneous_endpoints(n0, m, n, g, b, d);
  EXPECT_EQ(classify_regime(n0, m, n, e.eps1, g, b, d).column, 0);
  EXPECT_EQ(classify_regime(n0, m, n, std::nextafter(e.eps1, 1.0), g, b, d).column, 1);
  EXPECT_EQ(classify_regime(n0, m, n, e.eps2, g, b, d).column, 1);
  EXPECT_EQ(classify_regime(n0, m, n, std::nextafter(e.eps2, 1.0), g, b, d).column, 2);
  EXPECT_EQ(classify_regime(n0, m, n, e.eps3, g, b, d).column, 2);
  EXPECT_EQ(classify_regime(n0, m, n, std::nextafter(e.eps3, 2.0), g, b, d).column, 3);
  EXPECT_EQ(classify_regime(n0, m, n, e.eps1, g, b, d).regime, Regime::Trivial);
}

TEST(PhaseDiagram, TableExamples)
{
  const double n0 = 1000, m = 4, n = 500, b = 0.25, d = 2;
  // gamma <= 1, moderate privacy
  auto e = homogeneous_endpoints(n0, m, n, 0.5, b, d);
  EXPECT_EQ(classify_regime(n0, m, n, 0.5 * (e.eps2 + e.eps3), 0.5, b, d).regime, Regime::NPs);
  // gamma > gamma*, past eps2
  e = homogeneous_endpoints(n0, m, n, 4.0, b, d);
  ASSERT_GT(4.0, e.gamma_star);
  EXPECT_EQ(classify_regime(n0, m, n, 0.9, 4.0, b, d).regime, Regime::NPt);
  EXPECT_EQ(classify_regime(n0, m, n, 1e-4, 4.0, b, d).regime, Regime::Trivial);
}

TEST(PhaseDiagram, MatchesDominantTermOutsideLooseCell)
{
  // the phase table lists NPs for gamma <= 1 across (eps2, eps3], while below eps3
  // the source rate is on its private branch; that cell is checked separately.
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  for (int rep = 0; rep < 20000; ++rep) {
    auto h = homog(0, 1 + rng() % 30, std::floor(std::pow(10.0, 1 + 3 * u(rng))), std::pow(10.0, -6 + 6 * u(rng)),
                   0.1 + 4 * u(rng), 0.1 + 0.9 * u(rng), 1 + rng() % 4);
    h.n0 = std::floor(h.n + u(rng) * (h.m * h.n - h.n));
    const auto c = classify_regime(h);
    if (c.band == GammaBand::AtMostOne && c.column == 2)
      continue;
    ++checked;
    EXPECT_EQ(c.regime, dominant_term_regime(h)) << "eps=" << h.eps << " gamma=" << h.gamma;
  }
  EXPECT_GT(checked, 15000);
}

TEST(PhaseDiagram, LooseCellCounterexample)
{
  // m = 30, n = 100, n0 = 1000, b = 0.5, d = 2, gamma = 0.5: eps2 < eps3
  const double n0 = 1000, m = 30, n = 100, g = 0.5, b = 0.5, d = 2;
  const auto e = homogeneous_endpoints(n0, m, n, g, b, d);
  ASSERT_LT(e.eps2, e.eps3);
  const double eps = std::sqrt(e.eps2 * e.eps3);
  const auto h = homog(n0, m, n, eps, g, b, d);
  EXPECT_EQ(classify_regime(h).regime, Regime::NPs);
  const auto t = four_terms(h);
  EXPECT_GT(t.p_s, t.np_s); // the source rate is the private one here
  EXPECT_EQ(dominant_term_regime(h), Regime::Ps);
}

TEST(RateCurve, MonotoneAndFlatAfterLastEndpoint)
{
  const auto base = homog(1000, 4, 500, 1.0, 1.0, 0.25, 2);
  std::vector<double> grid;
  for (int i = 0; i <= 400; ++i)
    grid.push_back(std::pow(10.0, -6.0 + 6.0 * i / 400.0));
  const auto curve = rate_curve(base, grid);
  const auto e = homogeneous_endpoints(1000, 4, 500, 1.0, 0.25, 2);
  const double flat_from = std::max(e.eps2, e.eps3);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    EXPECT_LE(curve[i].rate, curve[i - 1].rate * (1 + 1e-15));
    if (curve[i - 1].eps >= flat_from)
      EXPECT_DOUBLE_EQ(curve[i].rate, curve[i - 1].rate);
  }
  EXPECT_EQ(curve.front().rate, 1.0);
  EXPECT_EQ(curve.front().regime, Regime::Trivial);
  ASSERT_TRUE(curve.back().endpoints);
  EXPECT_LT(curve.back().rate, 1.0);
}

TEST(RateCurve, SingleServerCurve)
{
  const auto base = homog(1000, 0, 1, 1.0, 1.0, 0.25, 2);
  const std::vector<double> grid{ 1e-4, 1e-2, 0.5, 1.0 };
  const auto curve = rate_curve(base, grid);
  for (const auto& pt : curve) {
    EXPECT_FALSE(pt.endpoints);
    EXPECT_TRUE(pt.regime == Regime::Trivial || pt.regime == Regime::Pt || pt.regime == Regime::NPt);
  }
  EXPECT_EQ(curve.back().regime, Regime::NPt);
  EXPECT_NEAR(curve.back().rate, std::pow(1000.0, -0.1), 1e-14);
}

TEST(PublicSource, CaseOne)
{
  const auto r = public_source_rate(100, 5000, 2000, 0.1, 1.0, 0.5, 0.0, 2);
  EXPECT_EQ(r.case_label, "1");
  EXPECT_NEAR(r.rate, std::pow(5000.0, -0.5 / 3.0), 1e-14);
}

TEST(PublicSource, CaseTwoFirstBranch)
{
  const double n1 = 1500, n2 = 2000, b = 0.5, g = 1.0, d = 2;
  const double lower = std::pow(n1, (b * g + d) / (2 * b * g + d)) / n2;
  const auto r = public_source_rate(100, n1, n2, 0.5 * lower, g, b, 0.0, d);
  EXPECT_EQ(r.case_label, "2a");
  EXPECT_NEAR(r.rate, std::pow(n1, -b / (2 * b * g + d)), 1e-14);
  const double upper = std::pow(n2, -b / (2 * b * g + d));
  ASSERT_LT(lower, upper);
  EXPECT_EQ(public_source_rate(100, n1, n2, std::sqrt(lower * upper), g, b, 0.0, d).case_label, "2b");
  EXPECT_EQ(public_source_rate(100, n1, n2, 0.9, g, b, 0.0, d).case_label, "2c");
}

TEST(PublicSource, ScopeError)
{
  EXPECT_THROW(public_source_rate(1000, 10, 50, 0.5, 1.0, 0.5, 0.0, 2), ScopeError);
}

TEST(PublicSource, AgreesWithSolverInCasesOneAndTwo)
{
  std::mt19937_64 rng(36);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int hits = 0;
  for (int rep = 0; rep < 3000; ++rep) {
    const double b = 0.05 + 0.95 * u(rng), d = 1 + rng() % 3, a = u(rng), g = 0.2 + 3 * u(rng);
    const double n0 = std::floor(std::pow(10.0, 1 + 3 * u(rng)));
    const double pivot = std::pow(n0, (2 * b * g + d) / (2 * b + d));
    const double n2 = std::floor(pivot * std::pow(10.0, 3 * u(rng))) + 1;
    const double n1 = std::floor(pivot * std::pow(10.0, 4 * u(rng)));
    const double eps = std::pow(10.0, -6 + 6 * u(rng));
    const auto pr = public_source_rate(n0, n1, n2, eps, g, b, a, d);
    if (pr.case_label[0] == '3')
      continue;
    ++hits;
    ProblemParams p;
    p.n = { n0, n1, n2 };
    p.eps = std::vector<double>{ eps, kInfinity, eps };
    p.gamma = { g, g };
    p.beta = b;
    p.alpha = a;
    p.d = static_cast<std::size_t>(d);
    const double s = solve_rate_equation(p).excess_risk;
    EXPECT_LE(std::abs(std::log(pr.rate / s)), b * (1 + a) * std::log(4.0) + 1e-12);
  }
  EXPECT_GT(hits, 1000);
}

TEST(LogFactor, Value)
{
  EXPECT_NEAR(log_factor(1e-6, 0.25, 1.0, 0.5, 2), std::pow(std::log(1e6), 0.5 / 2.25), 1e-12);
  EXPECT_THROW(log_factor(0.0, 0.25, 1.0, 0.5, 2), InputError);
}
