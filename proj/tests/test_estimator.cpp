#include <gtest/gtest.h>

#include <cmath>

#include "oracles/marginal_quadrature.hpp"
#include "qsid/qsid.hpp"

using namespace qsid;

namespace {

SystemSpec spec_for(std::uint64_t s, bool real = true) {
  Philox rng = Philox::stream(31, {s});
  return generate_random_system(3, 12, 72, real, rng);
}

TraceSet noiseless(const SystemSpec& s) {
  return synthesize_traces(s, SamplingPlan{default_time_grid(s), SamplingStrategy::infinite(), 0});
}

TransitionParams params_of(std::initializer_list<double> w, std::initializer_list<double> g) {
  TransitionParams p;
  p.omega = Eigen::Map<const Eigen::VectorXd>(std::data(w), static_cast<Eigen::Index>(w.size()));
  p.Gamma = Eigen::Map<const Eigen::VectorXd>(std::data(g), static_cast<Eigen::Index>(g.size()));
  return p;
}

}  // namespace

TEST(Basis, RowLayout) {
  const auto p = params_of({0.5, 1.3}, {0.01, 0.2});
  Eigen::VectorXd t(4);
  t << 0.0, 1.0, 2.0, 3.5;
  const Eigen::MatrixXd gr = evaluate_basis(BasisFamily{BasisKind::RealSymmetric, p}, t);
  const Eigen::MatrixXd gg = evaluate_basis(BasisFamily{BasisKind::General, p}, t);
  ASSERT_EQ(gr.rows(), 3);
  ASSERT_EQ(gg.rows(), 5);
  for (int n = 0; n < 4; ++n) {
    EXPECT_DOUBLE_EQ(gr(1, n), std::exp(-0.2 * t[n]) * std::cos(1.3 * t[n]));
    EXPECT_DOUBLE_EQ(gg(1, n), std::exp(-0.01 * t[n]) * std::sin(0.5 * t[n]));
    EXPECT_DOUBLE_EQ(gg(2, n), gr(1, n));
    EXPECT_EQ(gr(2, n), 1.0);
    EXPECT_EQ(gg(4, n), 1.0);
  }
}

TEST(Basis, OrthonormalRowsSpanOriginal) {
  Philox rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const auto kind = rep % 2 ? BasisKind::General : BasisKind::RealSymmetric;
    const auto p = params_of({rng.uniform(0.2, 0.6), rng.uniform(0.8, 1.2), rng.uniform(1.5, 2.5)},
                             {rng.uniform(0, 0.01), rng.uniform(0, 0.01), rng.uniform(0, 0.01)});
    const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(120, 1.0, 120.0);
    const Eigen::MatrixXd g = evaluate_basis(BasisFamily{kind, p}, t);
    const OrthoProjection op = orthogonalize(g);
    ASSERT_FALSE(op.rank_deficient());
    const Eigen::MatrixXd& h = op.functions;
    EXPECT_LT((h * h.transpose() - Eigen::MatrixXd::Identity(h.rows(), h.rows())).cwiseAbs().maxCoeff(), 1e-10);
    const Eigen::MatrixXd back = g - (g * h.transpose()) * h;
    EXPECT_LT(back.cwiseAbs().maxCoeff() / g.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Basis, DuplicateFunctionsDropped) {
  const auto p = params_of({0.7, 0.7}, {0.0, 0.0});
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(50, 1.0, 50.0);
  const OrthoProjection op = orthogonalize(evaluate_basis(BasisFamily{BasisKind::RealSymmetric, p}, t));
  EXPECT_EQ(op.rank(), 2);
  EXPECT_THROW(require_full_rank(op), RankDeficientBasis);
  EXPECT_THROW(orthogonalize(Eigen::MatrixXd::Ones(3, 3)), InvalidArgument);
}

TEST(Posterior, MatchesBruteForceMarginal) {
  TraceSet tr(1, {});
  Philox rng(9);
  for (int n = 1; n <= 16; ++n) tr.times.push_back(n);
  tr.d.resize(16);
  tr.repetitions.assign(16, 0);
  for (int n = 0; n < 16; ++n) tr.d[n] = 0.4 + 0.3 * std::cos(1.1 * (n + 1)) + 0.05 * rng.normal();
  std::vector<double> diff;
  for (double w : {0.9, 1.1, 1.4})
    for (double g : {0.0, 0.05, 0.3}) {
      const auto p = params_of({w}, {g});
      Eigen::MatrixXd basis = evaluate_basis(BasisFamily{BasisKind::RealSymmetric, p}, tr.time_vector());
      const double brute = oracle::log_marginal_two_amplitudes(basis, Eigen::Map<Eigen::VectorXd>(tr.d.data(), 16));
      diff.push_back(log_posterior(p, BasisKind::RealSymmetric, tr).logp - brute / std::log(10.0));
    }
  for (double d : diff) EXPECT_NEAR(d, diff.front(), 1e-3);
}

TEST(Posterior, InvariantUnderTraceScaling) {
  const SystemSpec s = spec_for(1);
  TraceSet tr = synthesize_traces(s, SamplingPlan{default_time_grid(s), SamplingStrategy::fixed(1000), 2});
  const auto p = detail::all_transitions(s).first;
  const double before = log_posterior(p, BasisKind::RealSymmetric, tr).logp;
  for (double& v : tr.d) v *= 3.7;
  EXPECT_NEAR(log_posterior(p, BasisKind::RealSymmetric, tr).logp, before, 1e-9 * std::abs(before));
}

TEST(Posterior, PeaksAtTruthForNoiselessData) {
  const SystemSpec s = spec_for(2);
  const TraceSet tr = noiseless(s);
  const auto truth = detail::all_transitions(s).first;
  const double at = log_posterior(truth, BasisKind::RealSymmetric, tr).logp;
  for (int m = 0; m < 3; ++m)
    for (double rel : {-1e-3, 1e-3}) {
      TransitionParams p = truth;
      p.omega[m] *= 1 + rel;
      EXPECT_LT(log_posterior(p, BasisKind::RealSymmetric, tr).logp, at);
      p = truth;
      p.Gamma[m] *= 1 + 100 * rel;
      EXPECT_LT(log_posterior(p, BasisKind::RealSymmetric, tr).logp, at);
    }
}

TEST(Posterior, ZeroDataRejected) {
  TraceSet tr(2, {1, 2, 3, 4, 5});
  EXPECT_THROW(log_posterior(params_of({1.0}, {0.0}), BasisKind::General, tr), DegenerateData);
}

TEST(Posterior, ZeroTraceIsSkipped) {
  const SystemSpec s = spec_for(3);
  TraceSet tr = noiseless(s);
  for (int n = 0; n < tr.num_times(); ++n) tr.at(0, 1, n) = 0.0;
  const auto pv = log_posterior(detail::all_transitions(s).first, BasisKind::RealSymmetric, tr);
  ASSERT_EQ(pv.degenerate_traces.size(), 1u);
  EXPECT_EQ(pv.degenerate_traces[0], (std::pair<int, int>{0, 1}));
  EXPECT_TRUE(std::isfinite(pv.logp));
}

TEST(Spectrum, PeakAtSinusoidBin) {
  const int nt = 200;
  TraceSet tr(1, {});
  for (int n = 1; n <= nt; ++n) tr.times.push_back(0.5 * n);
  tr.d.resize(nt);
  tr.repetitions.assign(nt, 0);
  const double bin = 2 * std::numbers::pi / (nt * 0.5);
  for (int n = 0; n < nt; ++n) tr.d[n] = 1.0 + std::cos(23 * bin * tr.times[n]);
  const Periodogram pg = summed_periodogram(tr);
  EXPECT_NEAR(pg.bin_width, bin, 1e-15);
  const auto peaks = find_peaks(pg, 1);
  ASSERT_EQ(peaks.size(), 1u);
  EXPECT_EQ(peaks[0].bin, 23);
  // Parseval: all variance sits in the one bin
  EXPECT_NEAR(pg.power[23], 0.5, 1e-12);
}

TEST(Spectrum, FlatSpectrumHasNoPeaks) {
  TraceSet tr(1, {});
  for (int n = 1; n <= 64; ++n) tr.times.push_back(n);
  tr.d.assign(64, 0.25);
  tr.repetitions.assign(64, 0);
  EXPECT_THROW(find_peaks(summed_periodogram(tr), 1), NoPeaks);
  tr.times[5] += 0.3;
  EXPECT_THROW(summed_periodogram(tr), InvalidArgument);
}

TEST(Seeds, FoldFrequency) {
  EXPECT_DOUBLE_EQ(detail::fold_frequency(0.4, 1.0), 0.4);
  EXPECT_DOUBLE_EQ(detail::fold_frequency(1.6, 1.0), 0.4);
  EXPECT_NEAR(detail::fold_frequency(2.4, 1.0), 0.4, 1e-15);
  EXPECT_DOUBLE_EQ(detail::fold_frequency(-0.4, 1.0), 0.4);
}

TEST(Seeds, CoverTrueFrequencies) {
  const SystemSpec s = spec_for(4);
  const TraceSet tr = noiseless(s);
  const auto truth = detail::all_transitions(s).first;
  const auto seeds = seed_frequencies(tr, 3);
  ASSERT_FALSE(seeds.empty());
  const double bin = summed_periodogram(tr).bin_width;
  // within the larger of two bins and the line half-width
  const Eigen::ArrayXd tol = truth.Gamma.array().max(2 * bin);
  bool close = false;
  for (const auto& sd : seeds) {
    ASSERT_EQ(sd.size(), 3);
    close = close || ((sd - truth.omega).array().abs() < tol).all();
  }
  EXPECT_TRUE(close);
  EXPECT_THROW(seed_frequencies(tr, 0), InvalidArgument);
}

class EstimatorRoundTrip : public ::testing::TestWithParam<int> {};

TEST_P(EstimatorRoundTrip, NoiselessRecovery) {
  const bool real = GetParam() % 2 == 0;
  const SystemSpec s = spec_for(static_cast<std::uint64_t>(40 + GetParam()), real);
  const TraceSet tr = noiseless(s);
  const auto kind = real ? BasisKind::RealSymmetric : BasisKind::General;
  Philox rng(GetParam());
  EstimatorOptions eo;
  eo.n_restarts = 4;
  const auto est = maximize_posterior(tr, 3, kind, seed_frequencies(tr, 3), eo, rng);
  const auto truth = detail::all_transitions(s).first;
  EXPECT_LT((est.params.omega - truth.omega).norm() / truth.omega.norm(), 1e-7);
  EXPECT_LT((est.params.Gamma - truth.Gamma).norm() / truth.Gamma.norm(), 1e-5);
  const auto c = extract_coefficients(est.params, kind, tr);
  const auto exact = exact_coefficients(s);
  for (std::size_t i = 0; i < c.a_values().size(); ++i) {
    EXPECT_NEAR(c.a_values()[i], exact.a_values()[i], 1e-6);
    EXPECT_NEAR(c.b_values()[i], exact.b_values()[i], 1e-6);
  }
  for (std::size_t i = 0; i < c.c_values().size(); ++i) EXPECT_NEAR(c.c_values()[i], exact.c_values()[i], 1e-6);
  EXPECT_GE(est.best_restart, 0);
  EXPECT_EQ(static_cast<int>(est.restarts.size()), 4 * static_cast<int>(seed_frequencies(tr, 3).size()));
}

INSTANTIATE_TEST_SUITE_P(Systems, EstimatorRoundTrip, ::testing::Range(0, 4));

TEST(Estimator, HamiltonianOnlyModelPinsRates) {
  const SystemSpec s = without_dephasing(spec_for(5));
  const TraceSet tr = noiseless(s);
  Philox rng(1);
  EstimatorOptions eo;
  eo.fit_damping = false;
  const auto est = maximize_posterior(tr, 3, BasisKind::RealSymmetric, seed_frequencies(tr, 3), eo, rng);
  EXPECT_EQ(est.params.Gamma.cwiseAbs().maxCoeff(), 0.0);
  const auto truth = detail::all_transitions(s).first;
  EXPECT_LT((est.params.omega - truth.omega).norm() / truth.omega.norm(), 1e-8);
}

TEST(Estimator, SeedDeterminism) {
  const SystemSpec s = spec_for(6);
  const TraceSet tr = synthesize_traces(s, SamplingPlan{default_time_grid(s), SamplingStrategy::fixed(1000), 4});
  auto run = [&] {
    Philox rng(77);
    EstimatorOptions eo;
    eo.n_restarts = 2;
    return maximize_posterior(tr, 3, BasisKind::RealSymmetric, seed_frequencies(tr, 3), eo, rng);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.params.omega, b.params.omega);
  EXPECT_EQ(a.params.Gamma, b.params.Gamma);
  EXPECT_EQ(a.posterior.logp, b.posterior.logp);
}

TEST(Estimator, CoefficientJsonRoundTrip) {
  const auto c = exact_coefficients(spec_for(7, false));
  const auto back = coefficients_from_json(nlohmann::json::parse(coefficients_to_json(c).dump()), 3);
  EXPECT_EQ(back.a_values(), c.a_values());
  EXPECT_EQ(back.b_values(), c.b_values());
  EXPECT_EQ(back.c_values(), c.c_values());
  EXPECT_THROW(coefficients_from_json(nlohmann::json::object(), 3), ParseError);
}

TEST(Optimize, BfgsQuadratic) {
  auto f = [](const Eigen::VectorXd& x) { return (x[0] - 1) * (x[0] - 1) + 10 * (x[1] + 2) * (x[1] + 2); };
  const auto r = minimize_bfgs(f, Eigen::Vector2d(5, 5));
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
  EXPECT_NEAR(r.x[1], -2.0, 1e-6);
}

TEST(Optimize, LevenbergMarquardtRosenbrock) {
  auto r = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd v(2);
    v << 10 * (x[1] - x[0] * x[0]), 1 - x[0];
    return v;
  };
  const Eigen::Vector2d x0(-1.2, 1.0);
  const auto res = levenberg_marquardt(r, x0);
  EXPECT_NEAR(res.x[0], 1.0, 1e-8);
  EXPECT_NEAR(res.x[1], 1.0, 1e-8);
  EXPECT_LE(res.cost, r(x0).squaredNorm());
}
