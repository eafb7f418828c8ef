#pragma once

// From estimated signal parameters to a Hamiltonian: level structure from the
// frequency sum rule, per-trace overlap fits, projector assembly, gauge
// fixing, and the error metrics of the benchmark tables.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qsid/core_model.hpp"
#include "qsid/errors.hpp"
#include "qsid/estimator.hpp"
#include "qsid/optimize.hpp"
#include "qsid/random.hpp"

namespace qsid {

// ---------------------------------------------------------------------------
// Level structure

struct LevelStructure {
  int dim = 0;
  std::vector<std::pair<int, int>> assignment;  ///< transition m -> level pair (mu, nu), mu < nu
  Eigen::VectorXd lambda_hat;                   ///< lambda_hat[0] = 0
  double sum_mismatch = 0.0;                    ///< |omega_sum - omega_a - omega_b|

  int pair_index(int mu, int nu) const {
    if (mu > nu) std::swap(mu, nu);
    for (std::size_t m = 0; m < assignment.size(); ++m)
      if (assignment[m] == std::pair{mu, nu}) return static_cast<int>(m);
    return -1;
  }
};

/// Qutrit level structure. The largest frequency must equal the sum of the
/// other two within tol; the lower gap is taken to be the smaller frequency.
/// The mirrored labeling (see reflect) fits the same data.
inline LevelStructure infer_level_structure(const Eigen::VectorXd& omega, double tol) {
  if (omega.size() != 3) throw InvalidArgument("level-structure inference is implemented for three transitions only");
  for (Eigen::Index i = 0; i < 3; ++i)
    if (!(omega[i] > 0.0)) throw InvalidArgument("frequencies must be positive");
  for (Eigen::Index i = 1; i < 3; ++i)
    if (omega[i] < omega[i - 1]) throw InvalidArgument("frequencies must be ascending");
  if (!(tol >= 0.0)) throw InvalidArgument("tolerance must be nonnegative");

  std::vector<int> sums;
  for (int i = 0; i < 3; ++i) {
    const double others = omega.sum() - omega[i];
    if (std::abs(omega[i] - others) <= tol) sums.push_back(i);
  }
  if (sums.empty())
    throw InconsistentFrequencies("no frequency equals the sum of the other two (mismatch " +
                                  std::to_string(omega[2] - omega[0] - omega[1]) + ")");
  if (sums.size() > 1) throw AmbiguousStructure("several sum relations hold within tolerance");
  const int s = sums.front();
  int a = -1, b = -1;
  for (int i = 0; i < 3; ++i)
    if (i != s) (a < 0 ? a : b) = i;
  if (omega[a] > omega[b]) std::swap(a, b);

  LevelStructure ls;
  ls.dim = 3;
  ls.assignment.resize(3);
  ls.assignment[static_cast<std::size_t>(a)] = {0, 1};
  ls.assignment[static_cast<std::size_t>(b)] = {1, 2};
  ls.assignment[static_cast<std::size_t>(s)] = {0, 2};
  ls.lambda_hat = Eigen::Vector3d(0.0, omega[a], omega[a] + omega[b]);
  ls.sum_mismatch = std::abs(omega[s] - omega[a] - omega[b]);
  return ls;
}

/// Reverses the level order (lambda -> lambda_max - lambda). For real data
/// this labeling reproduces every trace exactly, with H -> const - H.
inline LevelStructure reflect(const LevelStructure& ls) {
  LevelStructure r = ls;
  const int top = ls.dim - 1;
  for (auto& [mu, nu] : r.assignment) {
    const int m2 = top - nu, n2 = top - mu;
    mu = m2;
    nu = n2;
  }
  for (int i = 0; i < ls.dim; ++i) r.lambda_hat[i] = ls.lambda_hat[top] - ls.lambda_hat[top - i];
  return r;
}

// ---------------------------------------------------------------------------
// Overlap fits and projectors

struct ProjectorSet {
  std::vector<Eigen::MatrixXcd> P;  ///< (P_nu)(l, k) = z_{kl;nu} after phase alignment
  double S_error = 0.0;
  int chosen_run = 0;
  std::vector<double> run_S_error;  ///< S of every run, for auditing the selection
  double max_residual = 0.0;        ///< worst per-trace fit residual norm of the chosen run
};

/// max_{mu,nu} |Tr(P_nu^dagger P_mu) - delta_{mu nu}|
inline double basis_error(const std::vector<Eigen::MatrixXcd>& P) {
  double s = 0.0;
  for (std::size_t nu = 0; nu < P.size(); ++nu)
    for (std::size_t mu = 0; mu < P.size(); ++mu) {
      const Complex tr = (P[nu].adjoint() * P[mu]).trace();
      s = std::max(s, std::abs(tr - Complex(nu == mu ? 1.0 : 0.0)));
    }
  return s;
}

struct OverlapFitOptions {
  int n_runs = 8;
  double residual_bound = 1.0;  ///< runs whose worst trace residual exceeds this are discarded
  LeastSquaresOptions lm{};
};

namespace detail {

// z_{kl;nu} for every trace of one run, indexed [k*N + l][nu].
using OverlapTable = std::vector<Eigen::VectorXcd>;

// Greedy start for a real trace: magnitudes from the rank-one structure of
// |a| (fallback sqrt(c/N)), relative signs from sign(a_{0 nu}), ties positive.
inline Eigen::VectorXd greedy_real_start(const SignalCoefficients& coeffs, const LevelStructure& ls, int k, int l) {
  const int n = ls.dim;
  Eigen::MatrixXd amag = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd asgn = Eigen::MatrixXd::Ones(n, n);
  for (std::size_t m = 0; m < ls.assignment.size(); ++m) {
    const auto [mu, nu] = ls.assignment[m];
    const double a = coeffs.a(k, l, static_cast<int>(m));
    amag(mu, nu) = amag(nu, mu) = std::abs(a);
    asgn(mu, nu) = asgn(nu, mu) = a < 0.0 ? -1.0 : 1.0;
  }
  const double fallback = std::sqrt(std::max(coeffs.c(k, l), 0.0) / n);
  Eigen::VectorXd s(n);
  for (int nu = 0; nu < n; ++nu) {
    // |z_nu|^2 = |a_{nu i}| |a_{nu j}| / |a_{ij}| averaged over pairs (i, j).
    double acc = 0.0;
    int cnt = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (i == nu || j == nu || !(amag(i, j) > 1e-14)) continue;
        acc += amag(nu, i) * amag(nu, j) / amag(i, j);
        ++cnt;
      }
    s[nu] = cnt > 0 ? std::sqrt(acc / cnt) : fallback;
  }
  for (int nu = 1; nu < n; ++nu) s[nu] *= asgn(0, nu);
  return s;
}

inline Eigen::VectorXd real_residual(const Eigen::VectorXd& x, const SignalCoefficients& coeffs,
                                     const LevelStructure& ls, int k, int l) {
  const int n = ls.dim;
  Eigen::VectorXd z(n);
  z.head(n - 1) = x;
  z[n - 1] = (k == l ? 1.0 : 0.0) - x.sum();
  const int mc = static_cast<int>(ls.assignment.size());
  Eigen::VectorXd r(mc + 1);
  for (int m = 0; m < mc; ++m) {
    const auto [mu, nu] = ls.assignment[static_cast<std::size_t>(m)];
    r[m] = z[mu] * z[nu] - coeffs.a(k, l, m);
  }
  r[mc] = z.squaredNorm() - coeffs.c(k, l);
  return r;
}

inline Eigen::VectorXd complex_residual(const Eigen::VectorXd& x, const SignalCoefficients& coeffs,
                                        const LevelStructure& ls, int k, int l) {
  const int n = ls.dim;
  Eigen::VectorXcd z(n);
  Complex last(k == l ? 1.0 : 0.0, 0.0);
  for (int nu = 0; nu < n - 1; ++nu) {
    z[nu] = Complex(x[2 * nu], x[2 * nu + 1]);
    last -= z[nu];
  }
  z[n - 1] = last;
  const int mc = static_cast<int>(ls.assignment.size());
  Eigen::VectorXd r(2 * mc + 1);
  for (int m = 0; m < mc; ++m) {
    const auto [mu, nu] = ls.assignment[static_cast<std::size_t>(m)];
    const Complex prod = std::conj(z[mu]) * z[nu];
    r[2 * m] = prod.real() - coeffs.a(k, l, m);
    r[2 * m + 1] = prod.imag() - coeffs.b(k, l, m);
  }
  r[2 * mc] = z.squaredNorm() - coeffs.c(k, l);
  return r;
}

// Fixes the per-trace phase freedom so that the z table forms Hermitian,
// approximately rank-one matrices: z_{lk} is aligned to conj(z_{kl}), traces
// touching level 0 are the gauge reference, and the remaining traces are
// rotated toward z_{kl} z_{00} = z_{0l} z_{k0}.
inline void align_phases(OverlapTable& z, int n, bool real) {
  auto at = [&](int k, int l) -> Eigen::VectorXcd& { return z[static_cast<std::size_t>(k * n + l)]; };
  auto unit = [&](Complex v) {
    if (real) return Complex(v.real() < 0.0 ? -1.0 : 1.0, 0.0);
    const double r = std::abs(v);
    return r > 0.0 ? v / r : Complex(1.0, 0.0);
  };
  for (int k = 0; k < n; ++k)
    for (int l = k + 1; l < n; ++l) {
      const Complex overlap = at(k, l).dot(at(l, k).conjugate());  // sum conj(z_kl) conj(z_lk)
      at(l, k) *= std::conj(unit(std::conj(overlap)));
    }
  for (int k = 1; k < n; ++k)
    for (int l = k + 1; l < n; ++l) {
      Complex acc(0.0, 0.0);
      for (int nu = 0; nu < z.front().size(); ++nu)
        acc += std::conj(at(k, l)[nu] * at(0, 0)[nu]) * (at(0, l)[nu] * at(k, 0)[nu]);
      const Complex ph = unit(acc);
      at(k, l) *= ph;
      at(l, k) *= std::conj(ph);
    }
}

inline std::vector<Eigen::MatrixXcd> projectors_from_table(const OverlapTable& z, int n) {
  std::vector<Eigen::MatrixXcd> P(static_cast<std::size_t>(n), Eigen::MatrixXcd::Zero(n, n));
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l)
      for (int nu = 0; nu < n; ++nu) P[static_cast<std::size_t>(nu)](l, k) = z[static_cast<std::size_t>(k * n + l)][nu];
  return P;
}

}  // namespace detail

/// Fits z_{kl;nu} trace by trace (sum_nu z = delta_kl imposed by
/// elimination) from several starts per trace; run 0 uses the greedy start,
/// the others random ones. The run with the smallest S is returned.
inline ProjectorSet fit_overlaps(const SignalCoefficients& coeffs, const LevelStructure& ls, BasisKind kind,
                                 const OverlapFitOptions& opts, Philox& rng) {
  const int n = ls.dim;
  if (coeffs.dim() != n || coeffs.transitions() != static_cast<int>(ls.assignment.size()))
    throw InvalidArgument("coefficients do not match the level structure");
  if (opts.n_runs < 1) throw InvalidArgument("n_runs must be >= 1");
  const bool real = kind == BasisKind::RealSymmetric;

  ProjectorSet best;
  best.S_error = std::numeric_limits<double>::infinity();
  bool any = false;
  for (int run = 0; run < opts.n_runs; ++run) {
    detail::OverlapTable table(static_cast<std::size_t>(n * n));
    double worst = 0.0;
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        Eigen::VectorXcd z(n);
        if (real) {
          Eigen::VectorXd x0(n - 1);
          if (run == 0) {
            x0 = detail::greedy_real_start(coeffs, ls, k, l).head(n - 1);
          } else {
            for (int i = 0; i < n - 1; ++i) x0[i] = rng.uniform(-1.0, 1.0);
          }
          const auto fit = levenberg_marquardt(
              [&](const Eigen::VectorXd& x) { return detail::real_residual(x, coeffs, ls, k, l); }, x0, opts.lm);
          for (int i = 0; i < n - 1; ++i) z[i] = fit.x[i];
          z[n - 1] = (k == l ? 1.0 : 0.0) - fit.x.sum();
          worst = std::max(worst, std::sqrt(fit.cost));
        } else {
          Eigen::VectorXd x0(2 * (n - 1));
          if (run == 0) {
            const Eigen::VectorXd g = detail::greedy_real_start(coeffs, ls, k, l);
            for (int i = 0; i < n - 1; ++i) {
              x0[2 * i] = g[i];
              x0[2 * i + 1] = 0.0;
            }
          } else {
            for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] = rng.uniform(-1.0, 1.0);
          }
          const auto fit = levenberg_marquardt(
              [&](const Eigen::VectorXd& x) { return detail::complex_residual(x, coeffs, ls, k, l); }, x0, opts.lm);
          Complex last(k == l ? 1.0 : 0.0, 0.0);
          for (int i = 0; i < n - 1; ++i) {
            z[i] = Complex(fit.x[2 * i], fit.x[2 * i + 1]);
            last -= z[i];
          }
          z[n - 1] = last;
          worst = std::max(worst, std::sqrt(fit.cost));
        }
        table[static_cast<std::size_t>(k * n + l)] = z;
      }
    // S is invariant under the per-trace phase freedom, so it is scored on
    // the raw fit; alignment only prepares the matrices for assembly.
    const double s = basis_error(detail::projectors_from_table(table, n));
    best.run_S_error.push_back(s);
    if (!(worst <= opts.residual_bound) || !std::isfinite(s)) continue;
    if (!any || s < best.S_error) {
      any = true;
      detail::align_phases(table, n, real);
      best.P = detail::projectors_from_table(table, n);
      best.S_error = s;
      best.chosen_run = run;
      best.max_residual = worst;
    }
  }
  if (!any) throw FitDiverged("every overlap-fit run exceeded the residual bound");
  return best;
}

// ---------------------------------------------------------------------------
// Assembly and gauge

enum class GaugeConvention { RealPositiveOffdiag, PhaseFree };

inline std::string to_string(GaugeConvention g) {
  return g == GaugeConvention::RealPositiveOffdiag ? "real_positive_offdiag" : "phase_free";
}

inline GaugeConvention gauge_convention_from_string(const std::string& s) {
  if (s == "real_positive_offdiag") return GaugeConvention::RealPositiveOffdiag;
  if (s == "phase_free") return GaugeConvention::PhaseFree;
  throw ParseError("unknown gauge convention: " + s);
}

struct GaugeRecord {
  GaugeConvention convention = GaugeConvention::RealPositiveOffdiag;
  double global_shift = 0.0;       ///< lambda_hat[0]; the overall energy offset is not identifiable
  Eigen::VectorXcd diagonal_phase; ///< D applied as D^dagger H D
  bool reflected = false;          ///< mirrored level labeling was chosen
  bool fixable = true;             ///< convention could be met exactly
  double violation = 0.0;          ///< sum of negative off-diagonal parts left over
};

struct ErrorMetrics {
  double eps_omega = 0.0;
  double eps_Gamma = 0.0;
  double eps_a = 0.0;
  double eps_S = 0.0;
  double eps_H = 0.0;
};

struct ReconstructionResult {
  Eigen::MatrixXcd H_hat;
  LevelStructure structure;
  std::vector<Eigen::MatrixXcd> projectors;  ///< rank-one projectors used in H_hat
  double S_error = 0.0;
  int chosen_run = 0;
  GaugeRecord gauge;
  ErrorMetrics metrics;
};

namespace detail {

// Closest rank-one projector: dominant eigenvector of the Hermitian part.
inline Eigen::MatrixXcd rank_one(const Eigen::MatrixXcd& p) {
  const Eigen::MatrixXcd herm = 0.5 * (p + p.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm);
  const Eigen::VectorXcd v = es.eigenvectors().col(herm.rows() - 1);
  return v * v.adjoint();
}

inline double offdiag_violation(const Eigen::MatrixXd& h) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = i + 1; j < h.cols(); ++j) v += std::max(0.0, -h(i, j));
  return v;
}

// Sign gauge D (D_0 = +1) minimizing the negative off-diagonal mass of D H D.
inline std::pair<Eigen::VectorXd, double> best_sign_gauge(const Eigen::MatrixXd& h) {
  const auto n = static_cast<int>(h.rows());
  Eigen::VectorXd best_d = Eigen::VectorXd::Ones(n);
  double best_v = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
    Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
    for (int i = 1; i < n; ++i)
      if (mask & (1u << (i - 1))) d[i] = -1.0;
    const double v = offdiag_violation(d.asDiagonal() * h * d.asDiagonal());
    if (v < best_v - 1e-15) {
      best_v = v;
      best_d = d;
    }
  }
  return {best_d, best_v};
}

// Phases making row 0's off-diagonal entries real and nonnegative.
inline Eigen::VectorXcd row_zero_phases(const Eigen::MatrixXcd& h) {
  Eigen::VectorXcd d = Eigen::VectorXcd::Ones(h.rows());
  for (Eigen::Index l = 1; l < h.rows(); ++l) {
    const double r = std::abs(h(0, l));
    if (r > 0.0) d[l] = std::conj(h(0, l)) / r;  // (D^dag H D)_{0l} = H_0l d_l
  }
  return d;
}

inline Eigen::MatrixXcd apply_gauge(const Eigen::MatrixXcd& h, const Eigen::VectorXcd& d) {
  return d.adjoint().asDiagonal() * h * d.asDiagonal();
}

inline Eigen::MatrixXcd assemble(const std::vector<Eigen::MatrixXcd>& projectors, const Eigen::VectorXd& lambda) {
  const auto n = static_cast<Eigen::Index>(projectors.size());
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index nu = 0; nu < n; ++nu) h += lambda[nu] * projectors[static_cast<std::size_t>(nu)];
  return 0.5 * (h + h.adjoint());
}

}  // namespace detail

/// H_hat = sum_nu lambda_hat_nu P_nu with rank-one projectors, then gauge
/// fixed. Under real_positive_offdiag the mirrored labeling is also tried and
/// whichever admits nonnegative off-diagonals wins; if neither does, the
/// smaller violation is kept and gauge.fixable is false (see
/// require_fixed_gauge).
inline ReconstructionResult assemble_hamiltonian(const LevelStructure& structure, const ProjectorSet& P,
                                                 GaugeConvention convention) {
  const int n = structure.dim;
  if (static_cast<int>(P.P.size()) != n) throw InvalidArgument("projector count differs from dimension");
  if (!std::isfinite(P.S_error)) throw InvalidArgument("basis error is not finite");

  std::vector<Eigen::MatrixXcd> rank1;
  for (const auto& p : P.P) rank1.push_back(detail::rank_one(p));

  ReconstructionResult res;
  res.S_error = P.S_error;
  res.chosen_run = P.chosen_run;
  res.gauge.convention = convention;
  res.gauge.global_shift = structure.lambda_hat[0];

  if (convention == GaugeConvention::RealPositiveOffdiag) {
    double best = std::numeric_limits<double>::infinity();
    for (int reflected = 0; reflected < 2; ++reflected) {
      // Mirroring relabels level nu as n-1-nu, so projector nu of the
      // mirrored structure is projector n-1-nu of the fit.
      const LevelStructure ls = reflected ? reflect(structure) : structure;
      std::vector<Eigen::MatrixXcd> proj = rank1;
      if (reflected) std::reverse(proj.begin(), proj.end());
      const Eigen::MatrixXd h = detail::assemble(proj, ls.lambda_hat).real();
      const auto [d, v] = detail::best_sign_gauge(h);
      if (v < best - 1e-15) {
        best = v;
        res.structure = ls;
        res.projectors = proj;
        res.H_hat = (d.asDiagonal() * h * d.asDiagonal()).cast<Complex>();
        res.gauge.diagonal_phase = d.cast<Complex>();
        res.gauge.reflected = reflected == 1;
        res.gauge.violation = v;
      }
    }
    const double scale = std::max(1.0, res.H_hat.cwiseAbs().maxCoeff());
    res.gauge.fixable = res.gauge.violation <= 1e-12 * scale;
    for (auto& p : res.projectors) {
      const Eigen::VectorXcd& d = res.gauge.diagonal_phase;
      p = detail::apply_gauge(p, d).real().cast<Complex>();
    }
  } else {
    res.structure = structure;
    res.projectors = rank1;
    const Eigen::MatrixXcd h = detail::assemble(rank1, structure.lambda_hat);
    res.gauge.diagonal_phase = detail::row_zero_phases(h);
    res.H_hat = detail::apply_gauge(h, res.gauge.diagonal_phase);
    for (auto& p : res.projectors) p = detail::apply_gauge(p, res.gauge.diagonal_phase);
  }
  res.H_hat = 0.5 * (res.H_hat + res.H_hat.adjoint()).eval();
  return res;
}

inline void require_fixed_gauge(const ReconstructionResult& r) {
  if (!r.gauge.fixable)
    throw GaugeUnfixable("no sign gauge makes every off-diagonal nonnegative (violation " +
                         std::to_string(r.gauge.violation) + ")");
}

// ---------------------------------------------------------------------------
// Error metrics

inline constexpr double kGammaFloor = 1e-12;

namespace detail {

// min over lambda* of ||A - B + lambda* 1||_F and ||B - lambda* 1||_F at that shift.
inline std::pair<double, double> shifted_distance(const Eigen::MatrixXcd& est, const Eigen::MatrixXcd& truth) {
  const auto n = static_cast<double>(truth.rows());
  const Complex shift = (truth - est).trace() / n;
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(truth.rows(), truth.cols());
  return {(est - truth + shift * id).norm(), (truth - shift * id).norm()};
}

}  // namespace detail

/// Relative Hamiltonian error, minimized over the free energy shift and the
/// residual gauge freedom of the convention (sign gauges; for phase_free also
/// the mirrored solution const - conj(H_hat), which fits the same data).
inline double hamiltonian_error(const Eigen::MatrixXcd& H_hat, const Eigen::MatrixXcd& H_true,
                                GaugeConvention convention) {
  const auto n = static_cast<int>(H_true.rows());
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](const Eigen::MatrixXcd& est, const Eigen::MatrixXcd& truth) {
    const auto [num, den] = detail::shifted_distance(est, truth);
    const double e = den > 0.0 ? num / den : num;
    best = std::min(best, e);
  };
  if (convention == GaugeConvention::RealPositiveOffdiag) {
    for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
      Eigen::VectorXcd d = Eigen::VectorXcd::Ones(n);
      for (int i = 1; i < n; ++i)
        if (mask & (1u << (i - 1))) d[i] = -1.0;
      consider(detail::apply_gauge(H_hat, d), H_true);
    }
  } else {
    const Eigen::MatrixXcd truth = detail::apply_gauge(H_true, detail::row_zero_phases(H_true));
    for (int mirrored = 0; mirrored < 2; ++mirrored) {
      const Eigen::MatrixXcd h = mirrored ? Eigen::MatrixXcd(-H_hat.conjugate()) : H_hat;
      consider(detail::apply_gauge(h, detail::row_zero_phases(h)), truth);
    }
  }
  return best;
}

/// Table metrics. Estimated and true transitions are matched by ascending
/// frequency; eps_a covers a (and b for the general basis) over all traces.
inline ErrorMetrics compute_error_metrics(const SystemSpec& truth, const TransitionParams& est_params,
                                          const SignalCoefficients& est_coeffs, BasisKind kind,
                                          const ReconstructionResult& rec) {
  const auto [true_params, map] = detail::all_transitions(truth);
  if (true_params.size() != est_params.size()) throw InvalidArgument("transition count mismatch");
  if (est_coeffs.dim() != truth.dim) throw InvalidArgument("dimension mismatch");
  ErrorMetrics m;
  m.eps_omega = (est_params.omega - true_params.omega).norm() / true_params.omega.norm();
  m.eps_Gamma = (est_params.Gamma - true_params.Gamma).norm() / std::max(true_params.Gamma.norm(), kGammaFloor);

  const SignalCoefficients exact = exact_coefficients(truth);
  double num = 0.0, den = 0.0;
  for (int k = 0; k < truth.dim; ++k)
    for (int l = 0; l < truth.dim; ++l)
      for (int t = 0; t < true_params.size(); ++t) {
        num += std::pow(est_coeffs.a(k, l, t) - exact.a(k, l, t), 2);
        den += std::pow(exact.a(k, l, t), 2);
        if (kind == BasisKind::General) {
          num += std::pow(est_coeffs.b(k, l, t) - exact.b(k, l, t), 2);
          den += std::pow(exact.b(k, l, t), 2);
        }
      }
  m.eps_a = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  m.eps_S = rec.S_error;
  m.eps_H = hamiltonian_error(rec.H_hat, truth.hamiltonian(), rec.gauge.convention);
  return m;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const ErrorMetrics& m) {
  return {{"eps_omega", m.eps_omega}, {"eps_Gamma", m.eps_Gamma}, {"eps_a", m.eps_a},
          {"eps_S", m.eps_S},         {"eps_H", m.eps_H}};
}

inline nlohmann::json to_json(const ReconstructionResult& r) {
  nlohmann::json assignment = nlohmann::json::array();
  for (const auto& [mu, nu] : r.structure.assignment) assignment.push_back({mu, nu});
  nlohmann::json phases = nlohmann::json::array();
  for (Eigen::Index i = 0; i < r.gauge.diagonal_phase.size(); ++i)
    phases.push_back({r.gauge.diagonal_phase[i].real(), r.gauge.diagonal_phase[i].imag()});
  return {{"H_hat", complex_matrix_to_json(r.H_hat)},
          {"lambda_hat", vector_to_json(r.structure.lambda_hat)},
          {"assignment", assignment},
          {"S_error", r.S_error},
          {"chosen_run", r.chosen_run},
          {"gauge",
           {{"convention", to_string(r.gauge.convention)},
            {"global_shift", r.gauge.global_shift},
            {"diagonal_phase", phases},
            {"reflected", r.gauge.reflected},
            {"fixable", r.gauge.fixable},
            {"violation", r.gauge.violation}}},
          {"metrics", to_json(r.metrics)}};
}

}  // namespace qsid
