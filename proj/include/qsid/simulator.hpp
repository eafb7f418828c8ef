#pragma once

// Random benchmark systems and stroboscopically sampled measurement traces
// with multinomial projection noise.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "qsid/core_model.hpp"
#include "qsid/errors.hpp"
#include "qsid/provenance.hpp"
#include "qsid/random.hpp"

namespace qsid {

// ---------------------------------------------------------------------------
// Sampling plans

enum class SamplingKind { Infinite, Fixed, Adaptive };

struct SamplingStrategy {
  SamplingKind kind = SamplingKind::Infinite;
  int repetitions = 0;        ///< Fixed: N_e per point
  double target_snr = 10.0;   ///< Adaptive: require p >= target_snr / sqrt(N_e)
  int max_repetitions = 10000;

  static SamplingStrategy infinite() { return {}; }
  static SamplingStrategy fixed(int n) { return {SamplingKind::Fixed, n, 10.0, n}; }
  static SamplingStrategy adaptive(double target = 10.0, int cap = 10000) {
    return {SamplingKind::Adaptive, 0, target, cap};
  }

  void validate() const {
    if (kind == SamplingKind::Fixed && repetitions < 1) throw InvalidArgument("Fixed sampling needs N_e >= 1");
    if (kind == SamplingKind::Adaptive && (!(target_snr > 0.0) || max_repetitions < 1))
      throw InvalidArgument("Adaptive sampling needs target > 0 and cap >= 1");
  }

  /// "inf", "fixed:<N_e>", "adaptive:<target>:<cap>"
  std::string label() const {
    switch (kind) {
      case SamplingKind::Infinite: return "inf";
      case SamplingKind::Fixed: return "fixed:" + std::to_string(repetitions);
      case SamplingKind::Adaptive: {
        std::ostringstream ss;
        ss << "adaptive:" << target_snr << ":" << max_repetitions;
        return ss.str();
      }
    }
    return "?";
  }

  static SamplingStrategy parse(const std::string& text) {
    try {
      if (text == "inf" || text == "infinite") return infinite();
      if (text.rfind("fixed:", 0) == 0) return fixed(std::stoi(text.substr(6)));
      if (text == "adaptive") return adaptive();
      if (text.rfind("adaptive:", 0) == 0) {
        const auto rest = text.substr(9);
        const auto colon = rest.find(':');
        if (colon == std::string::npos) return adaptive(std::stod(rest));
        return adaptive(std::stod(rest.substr(0, colon)), std::stoi(rest.substr(colon + 1)));
      }
    } catch (const std::logic_error&) {
    }
    throw ParseError("unknown sampling strategy '" + text + "'");
  }
};

struct SamplingPlan {
  std::vector<double> times;
  SamplingStrategy strategy;
  std::uint64_t seed = 0;

  void validate() const {
    if (times.empty()) throw InvalidArgument("empty time grid");
    if (times.front() < 0.0) throw InvalidArgument("times must be nonnegative");
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1])) throw InvalidArgument("times must be strictly ascending");
    strategy.validate();
  }
};

/// N^2 sampled traces. Repetitions of 0 mark the noiseless (infinite) case.
struct TraceSet {
  int dim = 0;
  std::vector<double> times;
  std::vector<double> d;            ///< indexed (k, l, n)
  std::vector<int> repetitions;     ///< indexed (k, n)

  TraceSet() = default;
  TraceSet(int n, std::vector<double> t)
      : dim(n),
        times(std::move(t)),
        d(static_cast<std::size_t>(n) * n * times.size(), 0.0),
        repetitions(static_cast<std::size_t>(n) * times.size(), 0) {}

  int num_times() const { return static_cast<int>(times.size()); }

  double& at(int k, int l, int n) { return d[(static_cast<std::size_t>(k) * dim + l) * times.size() + n]; }
  double at(int k, int l, int n) const { return d[(static_cast<std::size_t>(k) * dim + l) * times.size() + n]; }
  int& reps(int k, int n) { return repetitions[static_cast<std::size_t>(k) * times.size() + n]; }
  int reps(int k, int n) const { return repetitions[static_cast<std::size_t>(k) * times.size() + n]; }

  Eigen::Map<const Eigen::VectorXd> trace(int k, int l) const {
    return {d.data() + (static_cast<std::size_t>(k) * dim + l) * times.size(),
            static_cast<Eigen::Index>(times.size())};
  }

  Eigen::Map<const Eigen::VectorXd> time_vector() const {
    return {times.data(), static_cast<Eigen::Index>(times.size())};
  }
};

// ---------------------------------------------------------------------------
// Random systems

/// Geometric mean of omega_m / Gamma_m over transitions with Gamma_m > 0.
/// Returns +infinity when no transition is damped.
inline double geometric_mean_q(const TransitionParams& params) {
  double log_sum = 0.0;
  int count = 0;
  for (int m = 0; m < params.size(); ++m) {
    if (params.Gamma[m] > 0.0) {
      log_sum += std::log(params.omega[m] / params.Gamma[m]);
      ++count;
    }
  }
  if (count == 0) return std::numeric_limits<double>::infinity();
  return std::exp(log_sum / count);
}

struct GeneratorOptions {
  double gap_min = 0.2;                  ///< level gaps drawn uniformly in [gap_min, gap_max]
  double gap_max = 1.0;
  double min_relative_separation = 0.05; ///< min |omega_i - omega_j| / max(omega)
  bool positive_offdiagonal = true;      ///< real case: gauge H to nonnegative off-diagonals
  bool with_dephasing = true;
  int max_attempts = 10000;
};

namespace detail {

// Haar-distributed orthogonal or unitary matrix from the QR decomposition of
// a Gaussian matrix with the phases of R's diagonal removed.
inline Eigen::MatrixXcd haar_matrix(int n, bool real, Philox& rng) {
  Eigen::MatrixXcd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = real ? Complex(rng.normal(), 0.0) : Complex(rng.normal(), rng.normal());
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
  Eigen::MatrixXcd q = qr.householderQ();
  const Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j) {
    const double mag = std::abs(r(j, j));
    const Complex ph = mag > 0.0 ? r(j, j) / mag : Complex(1.0);
    q.col(j) *= ph;
  }
  if (real) q = q.real().cast<Complex>();
  return q;
}

// Column signs of W that make every off-diagonal element of H = W^T L W
// nonnegative; returns false if no sign pattern does.
inline bool positive_offdiagonal_gauge(Eigen::MatrixXcd& w, const Eigen::VectorXd& lambda) {
  const int n = static_cast<int>(w.cols());
  const Eigen::MatrixXd h = (w.adjoint() * lambda.cast<Complex>().asDiagonal() * w).real();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (n - 1)); ++mask) {
    auto sign = [&](int k) { return k == 0 ? 1.0 : ((mask >> (k - 1)) & 1 ? -1.0 : 1.0); };
    bool ok = true;
    for (int k = 0; k < n && ok; ++k)
      for (int l = k + 1; l < n && ok; ++l) ok = sign(k) * sign(l) * h(k, l) >= 0.0;
    if (ok) {
      for (int k = 1; k < n; ++k) w.col(k) *= sign(k);
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Random system whose geometric-mean Q-factor is drawn log-uniformly in
/// [q_min, q_max]. The dephasing spread is scaled in closed form: every
/// Gamma_m is quadratic in it, so Q scales as its inverse square.
inline SystemSpec generate_random_system(int dim, double q_min, double q_max, bool real_symmetric, Philox& rng,
                                         const GeneratorOptions& opts = {}) {
  if (dim < 2) throw InvalidArgument("dim must be >= 2");
  if (!(q_min > 0.0) || !(q_min <= q_max)) throw InvalidArgument("need 0 < q_min <= q_max");

  for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
    SystemSpec spec;
    spec.dim = dim;
    spec.real_symmetric = real_symmetric;
    spec.lambda.resize(dim);
    spec.lambda[0] = rng.uniform(-0.5, 0.5);
    for (int i = 1; i < dim; ++i) spec.lambda[i] = spec.lambda[i - 1] + rng.uniform(opts.gap_min, opts.gap_max);
    spec.gamma = Eigen::VectorXd::Zero(dim);
    spec.basis_map = detail::haar_matrix(dim, real_symmetric, rng);

    const auto [bare, map] = detail::all_transitions(spec);
    const double wmax = bare.omega.maxCoeff();
    bool separated = bare.omega[0] >= opts.min_relative_separation * wmax;
    for (int m = 1; m < bare.size() && separated; ++m)
      separated = bare.omega[m] - bare.omega[m - 1] >= std::max(opts.min_relative_separation, kDegeneracyTolerance) * wmax;
    if (!separated) continue;
    if (real_symmetric && opts.positive_offdiagonal && !detail::positive_offdiagonal_gauge(spec.basis_map, spec.lambda))
      continue;

    if (opts.with_dephasing) {
      Eigen::VectorXd u(dim);
      for (int i = 0; i < dim; ++i) u[i] = rng.normal();
      u.array() -= u.mean();
      if (u.norm() == 0.0) continue;
      u /= u.norm();
      spec.gamma = u;
      const double q_unit = geometric_mean_q(detail::all_transitions(spec).first);
      if (!std::isfinite(q_unit)) continue;
      const double target = q_min == q_max ? q_min : std::exp(rng.uniform(std::log(q_min), std::log(q_max)));
      const double spread = std::sqrt(q_unit / target);
      const double offset = rng.uniform(0.0, 1.0) * spread;
      spec.gamma = (offset + spread * u.array()).matrix();
      const double q = geometric_mean_q(detail::all_transitions(spec).first);
      if (!(q >= q_min * (1 - 1e-12) && q <= q_max * (1 + 1e-12))) continue;
    }
    spec.validate();
    return spec;
  }
  throw RejectionExhausted("no admissible system after " + std::to_string(opts.max_attempts) + " attempts");
}

/// Same Hamiltonian, no dephasing.
inline SystemSpec without_dephasing(SystemSpec spec) {
  spec.gamma.setZero();
  return spec;
}

// ---------------------------------------------------------------------------
// Time grid

struct TimeGridOptions {
  int n_times = 500;
  double oversampling = 2.5;     ///< kappa in dt = 2 pi / (kappa omega_max)
  double decay_multiple = 3.0;   ///< T <= decay_multiple / Gamma_min
  int min_times = 32;
};

/// t_n = n dt, n = 1..N, with dt = 2 pi / (kappa omega_max) and the duration
/// capped at decay_multiple / Gamma_min; the cap shortens the grid.
inline std::vector<double> default_time_grid(double omega_max, double gamma_min, const TimeGridOptions& opts = {}) {
  if (!(omega_max > 0.0)) throw InvalidArgument("omega_max must be positive");
  const double dt = 2.0 * std::numbers::pi / (opts.oversampling * omega_max);
  int count = opts.n_times;
  if (gamma_min > 0.0) {
    const double t_cap = opts.decay_multiple / gamma_min;
    count = std::min(count, static_cast<int>(std::floor(t_cap / dt)));
    count = std::max(count, std::min(opts.min_times, opts.n_times));
  }
  std::vector<double> t(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) t[static_cast<std::size_t>(n)] = (n + 1) * dt;
  return t;
}

inline std::vector<double> default_time_grid(const SystemSpec& spec, const TimeGridOptions& opts = {}) {
  const auto params = detail::all_transitions(spec).first;
  return default_time_grid(params.omega.maxCoeff(), params.Gamma.minCoeff(), opts);
}

// ---------------------------------------------------------------------------
// Adaptive repetitions

/// Smallest N_e in [1, cap] with envelope >= target / sqrt(N_e); cap if none.
inline int repetitions_for_envelope(double envelope, double target, int cap) {
  if (!(envelope > 0.0)) return cap;
  const double need = (target / envelope) * (target / envelope);
  if (!(need <= cap)) return cap;
  int n = std::max(1, static_cast<int>(std::ceil(need)));
  while (n > 1 && envelope >= target / std::sqrt(static_cast<double>(n - 1))) --n;
  while (n < cap && envelope < target / std::sqrt(static_cast<double>(n))) ++n;
  return n;
}

/// Per (k, n) repetition counts for the adaptive strategy. The envelope is
/// the noiseless minimum over outcomes of p_kl(t_n).
inline std::vector<int> resolve_adaptive_repetitions(const SystemSpec& spec, const std::vector<double>& times,
                                                     double target, int cap) {
  if (!(target > 0.0) || cap < 1) throw InvalidArgument("need target > 0 and cap >= 1");
  const ProbabilityModel model(spec);
  std::vector<int> reps(static_cast<std::size_t>(spec.dim) * times.size());
  for (int k = 0; k < spec.dim; ++k)
    for (std::size_t n = 0; n < times.size(); ++n) {
      const double envelope = model.distribution(k, times[n]).minCoeff();
      reps[static_cast<std::size_t>(k) * times.size() + n] = repetitions_for_envelope(envelope, target, cap);
    }
  return reps;
}

// ---------------------------------------------------------------------------
// Trace synthesis

namespace detail {

// One multinomial draw as a sequence of conditional binomials.
inline std::vector<std::int64_t> multinomial(std::int64_t trials, const Eigen::VectorXd& p, Philox& rng) {
  const auto n = static_cast<int>(p.size());
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n), 0);
  std::int64_t remaining = trials;
  double mass = 1.0;
  for (int l = 0; l < n - 1 && remaining > 0; ++l) {
    const double pl = std::clamp(p[l], 0.0, 1.0);
    const double q = mass > 0.0 ? std::clamp(pl / mass, 0.0, 1.0) : 0.0;
    counts[static_cast<std::size_t>(l)] = rng.binomial(remaining, q);
    remaining -= counts[static_cast<std::size_t>(l)];
    mass -= pl;
  }
  counts[static_cast<std::size_t>(n - 1)] += remaining;
  return counts;
}

}  // namespace detail

/// Samples every trace. Each initial state k draws from its own stream
/// derived from (plan.seed, k).
inline TraceSet synthesize_traces(const SystemSpec& spec, const SamplingPlan& plan) {
  spec.validate();
  plan.validate();
  const ProbabilityModel model(spec);
  TraceSet traces(spec.dim, plan.times);
  std::vector<int> adaptive;
  if (plan.strategy.kind == SamplingKind::Adaptive)
    adaptive = resolve_adaptive_repetitions(spec, plan.times, plan.strategy.target_snr, plan.strategy.max_repetitions);

  for (int k = 0; k < spec.dim; ++k) {
    Philox rng = Philox::stream(plan.seed, {static_cast<std::uint64_t>(k)});
    for (int n = 0; n < traces.num_times(); ++n) {
      const Eigen::VectorXd p = model.distribution(k, plan.times[static_cast<std::size_t>(n)]);
      if (plan.strategy.kind == SamplingKind::Infinite) {
        for (int l = 0; l < spec.dim; ++l) traces.at(k, l, n) = p[l];
        continue;
      }
      const int reps = plan.strategy.kind == SamplingKind::Fixed
                           ? plan.strategy.repetitions
                           : adaptive[static_cast<std::size_t>(k) * plan.times.size() + static_cast<std::size_t>(n)];
      const auto counts = detail::multinomial(reps, p, rng);
      traces.reps(k, n) = reps;
      for (int l = 0; l < spec.dim; ++l)
        traces.at(k, l, n) = static_cast<double>(counts[static_cast<std::size_t>(l)]) / reps;
    }
  }
  return traces;
}

// ---------------------------------------------------------------------------
// Persistence: CSV rows k,ell,n,t,d,Ne plus a JSON sidecar.

inline std::string traces_to_csv(const TraceSet& traces) {
  std::string out = "k,ell,n,t,d,Ne\n";
  char buf[128];
  for (int k = 0; k < traces.dim; ++k)
    for (int l = 0; l < traces.dim; ++l)
      for (int n = 0; n < traces.num_times(); ++n) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%.17g,%d\n", k, l, n, traces.times[static_cast<std::size_t>(n)],
                      traces.at(k, l, n), traces.reps(k, n));
        out += buf;
      }
  return out;
}

inline TraceSet traces_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("k,ell,n,t,d,Ne", 0) != 0) throw ParseError("trace CSV header mismatch");
  struct Row {
    int k, l, n, ne;
    double t, d;
  };
  std::vector<Row> rows;
  int dim = 0, nt = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r{};
    if (std::sscanf(line.c_str(), "%d,%d,%d,%lf,%lf,%d", &r.k, &r.l, &r.n, &r.t, &r.d, &r.ne) != 6)
      throw ParseError("bad trace CSV row: " + line);
    if (r.k < 0 || r.l < 0 || r.n < 0) throw ParseError("negative index in trace CSV");
    dim = std::max({dim, r.k + 1, r.l + 1});
    nt = std::max(nt, r.n + 1);
    rows.push_back(r);
  }
  if (rows.size() != static_cast<std::size_t>(dim) * dim * nt) throw ParseError("trace CSV is incomplete");
  TraceSet traces(dim, std::vector<double>(static_cast<std::size_t>(nt), 0.0));
  for (const auto& r : rows) {
    traces.times[static_cast<std::size_t>(r.n)] = r.t;
    traces.at(r.k, r.l, r.n) = r.d;
    traces.reps(r.k, r.n) = r.ne;
  }
  return traces;
}

inline nlohmann::json to_json(const SamplingPlan& plan) {
  return {{"times", plan.times},
          {"strategy", plan.strategy.label()},
          {"seed", plan.seed},
          {"rng", Philox::name}};
}

inline SamplingPlan sampling_plan_from_json(const nlohmann::json& j) {
  SamplingPlan plan;
  try {
    plan.times = j.at("times").get<std::vector<double>>();
    plan.strategy = SamplingStrategy::parse(j.at("strategy").get<std::string>());
    plan.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("SamplingPlan: ") + e.what());
  }
  plan.validate();
  return plan;
}

/// Sidecar stored next to a trace CSV.
inline nlohmann::json trace_sidecar(const SamplingPlan& plan, const std::string& spec_sha256) {
  return {{"plan", to_json(plan)}, {"spec_sha256", spec_sha256}};
}

}  // namespace qsid
