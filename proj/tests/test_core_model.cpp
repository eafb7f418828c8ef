#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "oracles/master_equation.hpp"
#include "qsid/qsid.hpp"

using namespace qsid;

namespace {

SystemSpec random_spec(std::uint64_t s, bool real, int dim = 3) {
  Philox rng = Philox::stream(11, {s});
  return generate_random_system(dim, 12, 72, real, rng);
}

// Hand-built two-level system with known closed form.
SystemSpec rabi(double theta, double omega, double g0, double g1) {
  SystemSpec s;
  s.dim = 2;
  s.lambda = Eigen::Vector2d(0.0, omega);
  s.gamma = Eigen::Vector2d(g0, g1);
  s.basis_map.resize(2, 2);
  s.basis_map << std::cos(theta), std::sin(theta), -std::sin(theta), std::cos(theta);
  s.real_symmetric = true;
  return s;
}

}  // namespace

TEST(CoreModel, TwoLevelClosedForm) {
  const double th = 0.3, w = 1.7, g0 = 0.1, g1 = 0.5;
  const SystemSpec s = rabi(th, w, g0, g1);
  const double G = 0.5 * (g0 - g1) * (g0 - g1);
  const double amp = 0.5 * std::sin(2 * th) * std::sin(2 * th);
  for (double t : {0.0, 0.4, 2.0, 9.0}) {
    const double p01 = amp * (1.0 - std::exp(-G * t) * std::cos(w * t));
    EXPECT_NEAR(exact_probability(s, 0, 1, t), p01, 1e-14);
    EXPECT_NEAR(exact_probability(s, 0, 0, t), 1.0 - p01, 1e-14);
  }
}

TEST(CoreModel, AgreesWithMasterEquation) {
  for (std::uint64_t i = 0; i < 6; ++i) {
    const SystemSpec s = random_spec(i, i % 2 == 0);
    const std::vector<double> times{0.0, 0.7, 3.1, 12.0, 40.0};
    for (int k = 0; k < 3; ++k) {
      Eigen::MatrixXcd rho0 = Eigen::MatrixXcd::Zero(3, 3);
      rho0(k, k) = 1.0;
      const auto rhos = oracle::integrate_master_equation(s.hamiltonian(), s.dephasing_operator(), rho0, times);
      for (std::size_t n = 0; n < times.size(); ++n)
        for (int l = 0; l < 3; ++l) EXPECT_NEAR(exact_probability(s, k, l, times[n]), rhos[n](l, l).real(), 1e-9);
    }
  }
}

TEST(CoreModel, EvolveDensityMatchesProbabilities) {
  const SystemSpec s = random_spec(3, false);
  for (int k = 0; k < 3; ++k) {
    Eigen::MatrixXcd rho0 = Eigen::MatrixXcd::Zero(3, 3);
    rho0(k, k) = 1.0;
    const Eigen::MatrixXcd r = evolve_density(s, rho0, 5.5);
    EXPECT_NEAR(r.trace().real(), 1.0, 1e-13);
    EXPECT_LT((r - r.adjoint()).norm(), 1e-13);
    for (int l = 0; l < 3; ++l) EXPECT_NEAR(r(l, l).real(), exact_probability(s, k, l, 5.5), 1e-13);
  }
}

class CoreModelProperty : public ::testing::TestWithParam<int> {};

TEST_P(CoreModelProperty, ConservesProbabilityAndStartsDiagonal) {
  const int dim = 2 + GetParam() % 4;
  const SystemSpec s = random_spec(static_cast<std::uint64_t>(100 + GetParam()), GetParam() % 2 == 0, dim);
  for (int k = 0; k < dim; ++k) {
    for (int l = 0; l < dim; ++l) EXPECT_NEAR(exact_probability(s, k, l, 0.0), k == l ? 1.0 : 0.0, 1e-13);
    for (double t : {0.3, 4.0, 50.0}) {
      double total = 0.0;
      for (int l = 0; l < dim; ++l) {
        const double p = exact_probability(s, k, l, t);
        EXPECT_GT(p, -1e-13);
        total += p;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST_P(CoreModelProperty, CoefficientIdentities) {
  const int dim = 2 + GetParam() % 4;
  const SystemSpec s = random_spec(static_cast<std::uint64_t>(200 + GetParam()), GetParam() % 2 == 0, dim);
  const auto c = exact_coefficients(s);
  const int M = dim * (dim - 1) / 2;
  ASSERT_EQ(c.transitions(), M);
  for (int k = 0; k < dim; ++k)
    for (int l = 0; l < dim; ++l) {
      double t0 = c.c(k, l);
      for (int m = 0; m < M; ++m) t0 += 2.0 * c.a(k, l, m);
      EXPECT_NEAR(t0, k == l ? 1.0 : 0.0, 1e-13);
      // p_kl and p_lk share a and c; b flips sign
      EXPECT_NEAR(c.c(k, l), c.c(l, k), 1e-14);
      for (int m = 0; m < M; ++m) {
        EXPECT_NEAR(c.a(k, l, m), c.a(l, k, m), 1e-14);
        EXPECT_NEAR(c.b(k, l, m), -c.b(l, k, m), 1e-14);
        if (s.real_symmetric) EXPECT_EQ(c.b(k, l, m), 0.0);
      }
    }
}

INSTANTIATE_TEST_SUITE_P(Systems, CoreModelProperty, ::testing::Range(0, 8));

TEST(CoreModel, TransitionsSortedWithRates) {
  const SystemSpec s = random_spec(5, true);
  const auto [p, map] = transition_params_from_spec(s);
  ASSERT_EQ(p.size(), 3);
  for (int m = 0; m < 3; ++m) {
    const auto [mu, nu] = map.pairs[m];
    EXPECT_DOUBLE_EQ(p.omega[m], s.lambda[nu] - s.lambda[mu]);
    EXPECT_DOUBLE_EQ(p.Gamma[m], 0.5 * std::pow(s.gamma[mu] - s.gamma[nu], 2));
    EXPECT_EQ(map.index_of(nu, mu), m);
  }
  EXPECT_LT(p.omega[0], p.omega[1]);
  EXPECT_LT(p.omega[1], p.omega[2]);
}

TEST(CoreModel, DegenerateLevelsRejected) {
  SystemSpec s = rabi(0.2, 1.0, 0, 0);
  s.lambda[1] = 0.0;
  EXPECT_TRUE(s.has_degenerate_levels());
  EXPECT_THROW(transition_params_from_spec(s), DegenerateSpectrum);
}

TEST(CoreModel, CoincidentFrequenciesRejected) {
  SystemSpec s = random_spec(6, true);
  s.lambda = Eigen::Vector3d(0.0, 1.0, 2.0);
  EXPECT_THROW(transition_params_from_spec(s), DegenerateSpectrum);
}

TEST(CoreModel, ValidationErrors) {
  SystemSpec s = rabi(0.2, 1.0, 0, 0);
  s.basis_map(0, 0) = 2.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = rabi(0.2, 1.0, 0, 0);
  s.lambda = Eigen::Vector2d(1.0, 0.0);
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = rabi(0.2, 1.0, 0, 0);
  EXPECT_THROW(exact_probability(s, 2, 0, 1.0), InvalidArgument);
  EXPECT_THROW(exact_probability(s, 0, 0, -1.0), InvalidArgument);
}

TEST(CoreModel, HamiltonianOnlyFlag) {
  EXPECT_TRUE(rabi(0.2, 1.0, 0.3, 0.3).hamiltonian_only());
  EXPECT_FALSE(rabi(0.2, 1.0, 0.3, 0.4).hamiltonian_only());
  // equal gamma means zero rates; p stays undamped
  const SystemSpec s = rabi(0.2, 1.0, 0.3, 0.3);
  EXPECT_NEAR(exact_probability(s, 0, 1, 2 * std::numbers::pi * 100), 0.0, 1e-10);
}

TEST(CoreModel, JsonRoundTrip) {
  const SystemSpec s = random_spec(7, false);
  const SystemSpec r = system_spec_from_json(nlohmann::json::parse(to_json(s).dump()));
  EXPECT_EQ(r.dim, s.dim);
  EXPECT_EQ(r.real_symmetric, s.real_symmetric);
  EXPECT_EQ((r.lambda - s.lambda).norm(), 0.0);
  EXPECT_EQ((r.gamma - s.gamma).norm(), 0.0);
  EXPECT_EQ((r.basis_map - s.basis_map).norm(), 0.0);
}
