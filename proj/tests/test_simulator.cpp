#include <gtest/gtest.h>

#include <cmath>

#include "qsid/qsid.hpp"

using namespace qsid;

namespace {

SystemSpec spec_for(std::uint64_t s, bool real = true) {
  Philox rng = Philox::stream(21, {s});
  return generate_random_system(3, 12, 72, real, rng);
}

}  // namespace

class GeneratorProperty : public ::testing::TestWithParam<int> {};

TEST_P(GeneratorProperty, RespectsQualityFactorAndSeparation) {
  const bool real = GetParam() % 2 == 0;
  const SystemSpec s = spec_for(static_cast<std::uint64_t>(GetParam()), real);
  s.validate();
  EXPECT_EQ(s.real_symmetric, real);
  const auto p = detail::all_transitions(s).first;
  const double q = geometric_mean_q(p);
  EXPECT_GE(q, 12.0 * (1 - 1e-9));
  EXPECT_LE(q, 72.0 * (1 + 1e-9));
  const double wmax = p.omega.maxCoeff();
  EXPECT_GE(p.omega[0], 0.05 * wmax);
  for (int m = 1; m < 3; ++m) EXPECT_GE(p.omega[m] - p.omega[m - 1], 0.05 * wmax * (1 - 1e-12));
  if (real) {
    const Eigen::MatrixXd h = s.hamiltonian().real();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j) EXPECT_GE(h(i, j), 0.0);
    EXPECT_LT(s.hamiltonian().imag().norm(), 1e-15);
  }
}

INSTANTIATE_TEST_SUITE_P(Draws, GeneratorProperty, ::testing::Range(0, 20));

TEST(Generator, DeterministicPerStream) {
  const SystemSpec a = spec_for(3), b = spec_for(3), c = spec_for(4);
  EXPECT_EQ((a.basis_map - b.basis_map).norm(), 0.0);
  EXPECT_EQ((a.gamma - b.gamma).norm(), 0.0);
  EXPECT_NE((a.lambda - c.lambda).norm(), 0.0);
}

TEST(Generator, BadArguments) {
  Philox rng(1);
  EXPECT_THROW(generate_random_system(1, 12, 72, true, rng), InvalidArgument);
  EXPECT_THROW(generate_random_system(3, 72, 12, true, rng), InvalidArgument);
  EXPECT_THROW(generate_random_system(3, 0, 12, true, rng), InvalidArgument);
  GeneratorOptions o;
  o.min_relative_separation = 0.9;  // unsatisfiable for a qutrit
  o.max_attempts = 50;
  EXPECT_THROW(generate_random_system(3, 12, 72, true, rng, o), RejectionExhausted);
}

TEST(Generator, WithoutDephasingKeepsHamiltonian) {
  const SystemSpec s = spec_for(5);
  const SystemSpec h = without_dephasing(s);
  EXPECT_TRUE(h.hamiltonian_only());
  EXPECT_LT((h.hamiltonian() - s.hamiltonian()).norm(), 1e-15);
}

TEST(TimeGrid, SpacingAndDecayCap) {
  const auto t = default_time_grid(2.0, 0.0);
  ASSERT_EQ(t.size(), 500u);
  const double dt = 2 * std::numbers::pi / (2.5 * 2.0);
  EXPECT_NEAR(t[0], dt, 1e-15);
  EXPECT_NEAR(t[499], 500 * dt, 1e-12);
  // cap: 3 / Gamma_min = 300 -> floor(300 / dt) points
  const auto c = default_time_grid(2.0, 0.01);
  EXPECT_EQ(c.size(), static_cast<std::size_t>(std::floor(300.0 / dt)));
  EXPECT_LE(c.back(), 300.0 + 1e-12);
  // never below the floor
  EXPECT_EQ(default_time_grid(2.0, 100.0).size(), 32u);
  EXPECT_THROW(default_time_grid(0.0, 0.1), InvalidArgument);
}

TEST(Adaptive, RepetitionRule) {
  for (double env : {0.9, 0.3, 0.15, 0.1001}) {
    const int n = repetitions_for_envelope(env, 10.0, 10000);
    EXPECT_GE(env, 10.0 / std::sqrt(n) - 1e-15);
    if (n > 1) EXPECT_LT(env, 10.0 / std::sqrt(n - 1));
  }
  EXPECT_EQ(repetitions_for_envelope(0.0, 10.0, 10000), 10000);
  EXPECT_EQ(repetitions_for_envelope(0.001, 10.0, 10000), 10000);
  EXPECT_EQ(repetitions_for_envelope(1.0, 10.0, 10000), 100);
}

TEST(Sampling, ParseStrategies) {
  EXPECT_EQ(SamplingStrategy::parse("inf").kind, SamplingKind::Infinite);
  const auto f = SamplingStrategy::parse("fixed:250");
  EXPECT_EQ(f.kind, SamplingKind::Fixed);
  EXPECT_EQ(f.repetitions, 250);
  const auto a = SamplingStrategy::parse("adaptive:5:2000");
  EXPECT_EQ(a.kind, SamplingKind::Adaptive);
  EXPECT_EQ(a.target_snr, 5.0);
  EXPECT_EQ(a.max_repetitions, 2000);
  EXPECT_THROW(SamplingStrategy::parse("fixed:x"), ParseError);
  EXPECT_THROW(SamplingStrategy::parse("sometimes"), ParseError);
}

TEST(Sampling, InfiniteIsExact) {
  const SystemSpec s = spec_for(6);
  SamplingPlan plan{default_time_grid(s), SamplingStrategy::infinite(), 1};
  const TraceSet tr = synthesize_traces(s, plan);
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l)
      for (int n = 0; n < tr.num_times(); n += 37) {
        EXPECT_EQ(tr.at(k, l, n), exact_probability(s, k, l, tr.times[n]));
        EXPECT_EQ(tr.reps(k, n), 0);
      }
}

TEST(Sampling, FixedCountsAreMultinomial) {
  const SystemSpec s = spec_for(7);
  SamplingPlan plan{default_time_grid(s), SamplingStrategy::fixed(400), 99};
  const TraceSet tr = synthesize_traces(s, plan);
  double z2 = 0.0;
  int count = 0;
  for (int k = 0; k < 3; ++k)
    for (int n = 0; n < tr.num_times(); ++n) {
      double total = 0.0;
      for (int l = 0; l < 3; ++l) {
        const double d = tr.at(k, l, n);
        const double x = d * 400;
        EXPECT_NEAR(x, std::round(x), 1e-9);
        total += d;
        const double p = exact_probability(s, k, l, tr.times[n]);
        if (400 * p * (1 - p) > 10) {
          z2 += (x - 400 * p) * (x - 400 * p) / (400 * p * (1 - p));
          ++count;
        }
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
      EXPECT_EQ(tr.reps(k, n), 400);
    }
  ASSERT_GT(count, 300);
  EXPECT_NEAR(z2 / count, 1.0, 6.0 * std::sqrt(2.0 / count));
}

TEST(Sampling, SeedDeterminesTraces) {
  const SystemSpec s = spec_for(8);
  SamplingPlan plan{default_time_grid(s), SamplingStrategy::fixed(100), 5};
  const TraceSet a = synthesize_traces(s, plan), b = synthesize_traces(s, plan);
  EXPECT_EQ(a.d, b.d);
  plan.seed = 6;
  EXPECT_NE(synthesize_traces(s, plan).d, a.d);
}

TEST(Sampling, AdaptiveUsesEnvelope) {
  const SystemSpec s = spec_for(9);
  SamplingPlan plan{default_time_grid(s), SamplingStrategy::adaptive(10.0, 10000), 5};
  const TraceSet tr = synthesize_traces(s, plan);
  const ProbabilityModel model(s);
  for (int k = 0; k < 3; ++k)
    for (int n = 0; n < tr.num_times(); n += 13)
      EXPECT_EQ(tr.reps(k, n), repetitions_for_envelope(model.distribution(k, tr.times[n]).minCoeff(), 10.0, 10000));
}

TEST(Sampling, PlanValidation) {
  const SystemSpec s = spec_for(10);
  EXPECT_THROW(synthesize_traces(s, SamplingPlan{{}, SamplingStrategy::infinite(), 0}), InvalidArgument);
  EXPECT_THROW(synthesize_traces(s, SamplingPlan{{1.0, 0.5}, SamplingStrategy::infinite(), 0}), InvalidArgument);
  EXPECT_THROW(synthesize_traces(s, SamplingPlan{{-1.0, 0.5}, SamplingStrategy::infinite(), 0}), InvalidArgument);
  EXPECT_THROW(synthesize_traces(s, SamplingPlan{{1.0}, SamplingStrategy::fixed(0), 0}), InvalidArgument);
}

TEST(Persistence, CsvRoundTripIsExact) {
  const SystemSpec s = spec_for(11);
  SamplingPlan plan{default_time_grid(s), SamplingStrategy::fixed(37), 3};
  const TraceSet tr = synthesize_traces(s, plan);
  const TraceSet back = traces_from_csv(traces_to_csv(tr));
  EXPECT_EQ(back.dim, tr.dim);
  EXPECT_EQ(back.times, tr.times);
  EXPECT_EQ(back.d, tr.d);
  EXPECT_EQ(back.repetitions, tr.repetitions);
}

TEST(Persistence, CsvErrors) {
  EXPECT_THROW(traces_from_csv("a,b\n"), ParseError);
  EXPECT_THROW(traces_from_csv("k,ell,n,t,d,Ne\n0,0,0,1.0,oops,1\n"), ParseError);
  EXPECT_THROW(traces_from_csv("k,ell,n,t,d,Ne\n0,0,0,1.0,0.5,1\n1,1,0,1.0,0.5,1\n"), ParseError);
}

TEST(Persistence, PlanJsonRoundTrip) {
  SamplingPlan plan{{0.5, 1.0, 1.5}, SamplingStrategy::adaptive(7.0, 300), 1234567890123ull};
  const SamplingPlan back = sampling_plan_from_json(nlohmann::json::parse(to_json(plan).dump()));
  EXPECT_EQ(back.times, plan.times);
  EXPECT_EQ(back.seed, plan.seed);
  EXPECT_EQ(back.strategy.label(), plan.strategy.label());
}
