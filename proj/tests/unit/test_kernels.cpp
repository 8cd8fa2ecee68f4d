#include <dptl/kernels.hpp>

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <vector>

using namespace dptl;

namespace {

const KernelFamily kFamilies[] = { KernelFamily::Triangular, KernelFamily::Epanechnikov,
                                   KernelFamily::Gaussian };

double K(const KernelSpec& s, std::vector<double> t)
{
  return eval_kernel(s, t);
}

} // namespace

TEST(Kernel, TriangularValues)
{
  const auto k = make_kernel(KernelFamily::Triangular, 2);
  EXPECT_DOUBLE_EQ(K(k, { 0.0, 0.0 }), 1.0);
  EXPECT_DOUBLE_EQ(K(k, { 0.5, 0.5 }), 0.25);
  EXPECT_DOUBLE_EQ(K(k, { 1.2, 0.0 }), 0.0);
  EXPECT_DOUBLE_EQ(K(k, { -0.25, 0.5 }), 0.75 * 0.5);
}

TEST(Kernel, EpanechnikovAndGaussianValues)
{
  const auto e = make_kernel(KernelFamily::Epanechnikov, 2);
  EXPECT_DOUBLE_EQ(K(e, { 0.5, 0.0 }), 0.75 * 0.75 * 0.75);
  EXPECT_DOUBLE_EQ(K(e, { 1.0, 0.0 }), 0.0);
  const auto g = make_kernel(KernelFamily::Gaussian, 1);
  EXPECT_NEAR(K(g, { 1.0 }), 0.24197072451914337, 1e-15);
}

TEST(Kernel, DimensionMismatchThrows)
{
  const auto k = make_kernel(KernelFamily::Triangular, 2);
  EXPECT_THROW(K(k, { 0.1 }), InputError);
  EXPECT_THROW(make_kernel(KernelFamily::Triangular, 0), InputError);
}

TEST(Kernel, ParseFamily)
{
  EXPECT_EQ(parse_kernel_family("triangular"), KernelFamily::Triangular);
  EXPECT_EQ(parse_kernel_family("epanechnikov"), KernelFamily::Epanechnikov);
  EXPECT_EQ(parse_kernel_family("gaussian"), KernelFamily::Gaussian);
  EXPECT_FALSE(parse_kernel_family("box"));
}

TEST(Kernel, CompactSupport)
{
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (auto f : { KernelFamily::Triangular, KernelFamily::Epanechnikov }) {
    const auto k = make_kernel(f, 3);
    for (int i = 0; i < 2000; ++i) {
      std::vector<double> t{ u(rng), u(rng), u(rng) };
      bool outside = false;
      for (double x : t)
        outside = outside || std::abs(x) > 1.0;
      if (outside)
        EXPECT_EQ(K(k, t), 0.0);
    }
  }
}

TEST(Kernel, SymmetricAndBoundedByCK)
{
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (auto f : kFamilies)
    for (std::size_t d : { 1u, 2u, 3u }) {
      const auto k = make_kernel(f, d);
      EXPECT_DOUBLE_EQ(K(k, std::vector<double>(d, 0.0)), k.c_K);
      for (int i = 0; i < 500; ++i) {
        std::vector<double> t(d), m(d);
        for (std::size_t a = 0; a < d; ++a) {
          t[a] = u(rng);
          m[a] = -t[a];
        }
        EXPECT_DOUBLE_EQ(K(k, t), K(k, m));
        EXPECT_LE(K(k, t), k.c_K);
      }
    }
}

TEST(Kernel, LowerBoundOnHalfBall)
{
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nrm;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto f : kFamilies)
    for (std::size_t d : { 1u, 2u, 3u }) {
      const auto k = make_kernel(f, d);
      for (int i = 0; i < 2000; ++i) {
        std::vector<double> t(d);
        double norm = 0.0;
        for (auto& x : t) {
          x = nrm(rng);
          norm += x * x;
        }
        const double r = 0.5 * (i % 4 == 0 ? 1.0 : std::pow(u(rng), 1.0 / static_cast<double>(d)));
        for (auto& x : t)
          x *= r / std::sqrt(norm);
        EXPECT_GE(K(k, t), k.b_K - 1e-15);
      }
    }
}

TEST(Kernel, LipschitzConstant)
{
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.2, 1.2), s(-0.05, 0.05);
  for (auto f : kFamilies)
    for (std::size_t d : { 1u, 2u, 3u }) {
      const auto k = make_kernel(f, d);
      for (int i = 0; i < 2000; ++i) {
        std::vector<double> a(d), b(d);
        double dist = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          a[c] = u(rng);
          b[c] = a[c] + s(rng);
          dist += (a[c] - b[c]) * (a[c] - b[c]);
        }
        EXPECT_LE(std::abs(K(k, a) - K(k, b)), k.L_K * std::sqrt(dist) + 1e-14);
      }
    }
}

TEST(Kernel, IntegratesToOne)
{
  // midpoint rule; the compact kernels are piecewise polynomial
  for (auto f : kFamilies)
    for (std::size_t d : { 1u, 2u }) {
      const auto k = make_kernel(f, d);
      const double lim = f == KernelFamily::Gaussian ? 8.0 : 1.0;
      const int steps = d == 1 ? 20000 : 800;
      const double dx = 2.0 * lim / steps;
      double total = 0.0;
      if (d == 1) {
        for (int i = 0; i < steps; ++i)
          total += K(k, { -lim + (i + 0.5) * dx }) * dx;
      } else {
        for (int i = 0; i < steps; ++i)
          for (int j = 0; j < steps; ++j)
            total += K(k, { -lim + (i + 0.5) * dx, -lim + (j + 0.5) * dx }) * dx * dx;
      }
      EXPECT_NEAR(total, 1.0, 1e-4) << to_string(f) << " d=" << d;
    }
}

TEST(Gram, SmallCases)
{
  const auto k1 = make_kernel(KernelFamily::Triangular, 1);
  Points one(1, { 0.3 });
  const auto g1 = gram_matrix(k1, one, 0.5);
  ASSERT_EQ(g1.rows(), 1);
  EXPECT_DOUBLE_EQ(g1(0, 0), k1.c_K);

  Points two(1, { 0.0, 0.25 });
  const auto g2 = gram_matrix(k1, two, 0.5);
  EXPECT_DOUBLE_EQ(g2(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(g2(1, 0), 0.5);

  Points far(1, { 0.0, 0.9 });
  EXPECT_EQ(gram_matrix(k1, far, 0.4)(0, 1), 0.0);

  const auto g = make_kernel(KernelFamily::Gaussian, 2);
  Points p(2, { 0.1, 0.2, 0.4, 0.6, 0.9, 0.1 });
  const auto m = gram_matrix(g, p, 0.3);
  for (int a = 0; a < 3; ++a) {
    EXPECT_DOUBLE_EQ(m(a, a), g.c_K);
    for (int b = 0; b < 3; ++b)
      EXPECT_DOUBLE_EQ(m(a, b), m(b, a));
  }
  EXPECT_THROW(gram_matrix(k1, two, 0.0), InputError);
}

TEST(Gram, PositiveSemidefiniteForTriangularAndGaussian)
{
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto f : { KernelFamily::Triangular, KernelFamily::Gaussian })
    for (std::size_t d : { 1u, 2u }) {
      const auto k = make_kernel(f, d);
      for (int rep = 0; rep < 100; ++rep) {
        const std::size_t q = 1 + rng() % 20;
        Points p(d);
        for (std::size_t i = 0; i < q; ++i) {
          std::vector<double> x(d);
          for (auto& c : x)
            c = u(rng);
          p.push_back(x);
        }
        const double h = 0.05 + 0.95 * u(rng);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram_matrix(k, p, h));
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
      }
    }
}

TEST(Gram, EpanechnikovIsIndefinite)
{
  // 11 equispaced points at h = 0.3; the smallest eigenvalue is about -0.279
  const auto k = make_kernel(KernelFamily::Epanechnikov, 1);
  Points p(1);
  for (int i = 0; i <= 10; ++i)
    p.push_back(std::vector<double>{ i / 10.0 });
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram_matrix(k, p, 0.3));
  EXPECT_NEAR(es.eigenvalues().minCoeff(), -0.27917156602893173, 1e-9);
  EXPECT_FALSE(k.positive_definite());
}
