#pragma once

// Marginal posterior of transition frequencies and dephasing rates for N^2
// traces that share a damped-sinusoid basis. Amplitudes and per-trace noise
// levels are integrated out, leaving
//
//   log10 P(omega, Gamma | d) = (m_b - N_t)/2 sum_kl log10(1 - m_b <h^2> / (N_t <d^2>))
//
// where h are projections of each trace onto the orthonormalized basis.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "qsid/core_model.hpp"
#include "qsid/errors.hpp"
#include "qsid/optimize.hpp"
#include "qsid/random.hpp"
#include "qsid/simulator.hpp"
#include "qsid/spectrum.hpp"

namespace qsid {

enum class BasisKind { General, RealSymmetric };

inline std::string to_string(BasisKind kind) { return kind == BasisKind::General ? "general" : "real_symmetric"; }

inline BasisKind basis_kind_from_string(const std::string& s) {
  if (s == "general") return BasisKind::General;
  if (s == "real_symmetric" || s == "real") return BasisKind::RealSymmetric;
  throw ParseError("unknown basis kind '" + s + "'");
}

struct BasisFamily {
  BasisKind kind = BasisKind::RealSymmetric;
  TransitionParams params;

  int transitions() const { return params.size(); }
  int basis_count() const { return kind == BasisKind::General ? 2 * transitions() + 1 : transitions() + 1; }
};

/// Basis functions sampled at `times`, one row per function. General:
/// (cos_1, sin_1, cos_2, sin_2, ..., 1); real-symmetric: (cos_1, ..., cos_M, 1).
inline Eigen::MatrixXd evaluate_basis(const BasisFamily& family, const Eigen::Ref<const Eigen::VectorXd>& times) {
  const int m_count = family.transitions();
  const Eigen::Index nt = times.size();
  Eigen::MatrixXd g(family.basis_count(), nt);
  const bool general = family.kind == BasisKind::General;
  for (int m = 0; m < m_count; ++m) {
    const double omega = family.params.omega[m];
    const double rate = family.params.Gamma[m];
    const int row = general ? 2 * m : m;
    for (Eigen::Index n = 0; n < nt; ++n) {
      const double t = times[n];
      const double decay = std::exp(-t * rate);
      g(row, n) = decay * std::cos(omega * t);
      if (general) g(row + 1, n) = decay * std::sin(omega * t);
    }
  }
  g.row(g.rows() - 1).setOnes();
  return g;
}

/// Eigenvalues below this fraction of the largest are dropped.
inline constexpr double kRetentionThreshold = 1e-12;

struct OrthoProjection {
  Eigen::MatrixXd gram;           ///< G = g g^T
  Eigen::VectorXd eigenvalues;    ///< alpha, ascending (all of them)
  Eigen::MatrixXd eigenvectors;   ///< columns e_m
  std::vector<int> retained;      ///< indices of kept eigenpairs
  Eigen::MatrixXd functions;      ///< orthonormal rows H_m(t_n), retained only

  int basis_count() const { return static_cast<int>(gram.rows()); }
  int rank() const { return static_cast<int>(retained.size()); }
  bool rank_deficient() const { return rank() < basis_count(); }

  Eigen::VectorXd project(const Eigen::Ref<const Eigen::VectorXd>& data) const { return functions * data; }
};

/// Builds G, its eigendecomposition, and H_m = alpha_m^{-1/2} sum_m' e_m'm g_m'.
inline OrthoProjection orthogonalize(const Eigen::Ref<const Eigen::MatrixXd>& g) {
  if (g.rows() >= g.cols()) throw InvalidArgument("need fewer basis functions than samples");
  OrthoProjection op;
  op.gram = g * g.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.gram);
  op.eigenvalues = es.eigenvalues();
  op.eigenvectors = es.eigenvectors();
  const double top = std::max(0.0, op.eigenvalues.maxCoeff());
  for (Eigen::Index m = 0; m < op.eigenvalues.size(); ++m)
    if (op.eigenvalues[m] > kRetentionThreshold * top) op.retained.push_back(static_cast<int>(m));
  op.functions.resize(op.rank(), g.cols());
  for (int i = 0; i < op.rank(); ++i) {
    const int m = op.retained[static_cast<std::size_t>(i)];
    op.functions.row(i) = op.eigenvectors.col(m).transpose() * g / std::sqrt(op.eigenvalues[m]);
  }
  return op;
}

inline void require_full_rank(const OrthoProjection& op) {
  if (op.rank_deficient())
    throw RankDeficientBasis("retained " + std::to_string(op.rank()) + " of " + std::to_string(op.basis_count()) +
                             " basis functions");
}

inline constexpr double kBracketFloor = 1e-300;

struct PosteriorValue {
  double logp = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd per_trace;                       ///< (k, l) summands, 0 for degenerate traces
  std::vector<std::pair<int, int>> degenerate_traces;
  int saturated = 0;                               ///< brackets clamped at the floor
  int effective_basis_count = 0;
};

/// Posterior evaluator bound to one TraceSet; the data matrix is formed once.
class PosteriorEvaluator {
 public:
  PosteriorEvaluator(const TraceSet& traces, BasisKind kind)
      : kind_(kind), dim_(traces.dim), times_(traces.time_vector()), data_(traces.dim * traces.dim, traces.num_times()) {
    for (int k = 0; k < dim_; ++k)
      for (int l = 0; l < dim_; ++l) data_.row(k * dim_ + l) = traces.trace(k, l).transpose();
    energy_ = data_.rowwise().squaredNorm();
    bool any = false;
    for (Eigen::Index i = 0; i < energy_.size(); ++i) any = any || energy_[i] > 0.0;
    if (!any) throw DegenerateData("all traces are identically zero");
  }

  BasisKind kind() const { return kind_; }
  int num_times() const { return static_cast<int>(times_.size()); }
  const Eigen::VectorXd& times() const { return times_; }
  const Eigen::MatrixXd& data() const { return data_; }        ///< row k*N+l holds trace (k, l)
  const Eigen::VectorXd& energy() const { return energy_; }

  PosteriorValue operator()(const TransitionParams& params) const {
    const BasisFamily family{kind_, params};
    const int nt = num_times();
    if (family.basis_count() >= nt) throw InvalidArgument("basis count must be below the sample count");
    const OrthoProjection op = orthogonalize(evaluate_basis(family, times_));
    const Eigen::MatrixXd h = op.functions * data_.transpose();   // rank x N^2
    const Eigen::VectorXd h_energy = h.colwise().squaredNorm().transpose();

    PosteriorValue pv;
    pv.effective_basis_count = op.rank();
    pv.per_trace = Eigen::MatrixXd::Zero(dim_, dim_);
    const double mb = op.rank();
    const double exponent = 0.5 * (mb - nt);
    double total = 0.0;
    for (int k = 0; k < dim_; ++k)
      for (int l = 0; l < dim_; ++l) {
        const int i = k * dim_ + l;
        if (!(energy_[i] > 0.0)) {
          pv.degenerate_traces.emplace_back(k, l);
          continue;
        }
        const double d2 = energy_[i] / nt;
        const double h2 = h_energy[i] / mb;
        double bracket = 1.0 - mb * h2 / (nt * d2);
        if (!(bracket > kBracketFloor)) {
          bracket = kBracketFloor;
          ++pv.saturated;
        }
        const double term = exponent * std::log10(bracket);
        pv.per_trace(k, l) = term;
        total += term;
      }
    pv.logp = total;
    return pv;
  }

 private:
  BasisKind kind_;
  int dim_;
  Eigen::VectorXd times_;
  Eigen::MatrixXd data_;
  Eigen::VectorXd energy_;
};

inline PosteriorValue log_posterior(const TransitionParams& params, BasisKind kind, const TraceSet& traces) {
  return PosteriorEvaluator(traces, kind)(params);
}

// ---------------------------------------------------------------------------
// Frequency seeds from the summed power spectrum

struct SeedOptions {
  double relative_threshold = 0.01;  ///< local maxima above this fraction of the largest
  int min_separation_bins = 2;
  double doublet_offset_bins = 1.0;
  double flatness_ratio = 4.0;       ///< max/median power below this counts as flat
  bool sequential = true;            ///< also add a line-by-line posterior scan candidate
  double scan_step_bins = 0.5;
  int final_alternatives = 3;        ///< scan maxima kept for the last line
};

struct SpectralPeak {
  int bin = 0;
  double frequency = 0.0;  ///< refined by log-parabolic interpolation
  double power = 0.0;
};

inline std::vector<SpectralPeak> find_peaks(const Periodogram& pg, int max_peaks, const SeedOptions& opts = {}) {
  const auto& p = pg.power;
  const int last = static_cast<int>(p.size()) - 1;
  if (last < 2) throw NoPeaks("spectrum too short");
  std::vector<double> body(p.begin() + 1, p.end());
  std::nth_element(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(body.size() / 2), body.end());
  const double median = body[body.size() / 2];
  const double top = *std::max_element(p.begin() + 1, p.end());
  if (!(top > 0.0) || top < opts.flatness_ratio * median) throw NoPeaks("summed spectrum is flat");

  std::vector<SpectralPeak> candidates;
  for (int j = 1; j <= last; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const bool left = p[uj] > p[uj - 1];
    const bool right = j == last || p[uj] >= p[uj + 1];
    if (left && right && p[uj] >= opts.relative_threshold * top) {
      double offset = 0.0;
      if (j < last && p[uj - 1] > 0.0 && p[uj + 1] > 0.0) {
        const double a = std::log(p[uj - 1]), b = std::log(p[uj]), c = std::log(p[uj + 1]);
        const double denom = a - 2.0 * b + c;
        if (denom < 0.0) offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
      }
      candidates.push_back({j, (j + offset) * pg.bin_width, p[uj]});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const SpectralPeak& x, const SpectralPeak& y) { return x.power > y.power; });
  std::vector<SpectralPeak> chosen;
  for (const auto& c : candidates) {
    if (static_cast<int>(chosen.size()) >= max_peaks) break;
    bool far = true;
    for (const auto& s : chosen) far = far && std::abs(s.bin - c.bin) >= opts.min_separation_bins;
    if (far) chosen.push_back(c);
  }
  if (chosen.empty()) throw NoPeaks("no spectral peaks above threshold");
  std::sort(chosen.begin(), chosen.end(),
            [](const SpectralPeak& x, const SpectralPeak& y) { return x.frequency < y.frequency; });
  return chosen;
}

namespace detail {

// Maps a frequency into [0, nyquist]. On a uniform grid every alias
// 2 nyquist k +- omega gives the same samples, so the posterior is unchanged.
inline double fold_frequency(double omega, double nyquist) {
  const double period = 2.0 * nyquist;
  double r = std::fmod(std::abs(omega), period);
  return r > nyquist ? period - r : r;
}

// Adds one line at a time: a grid scan of the posterior over the new
// frequency (with a few trial widths), then a joint local refinement of all
// lines found so far.
inline std::vector<Eigen::VectorXd> sequential_seed(const TraceSet& traces, int transitions, double bin_width,
                                                    const SeedOptions& opts) {
  const PosteriorEvaluator posterior(traces, BasisKind::General);
  const double nyquist = std::numbers::pi / uniform_spacing(traces.times);
  const double widths[] = {0.0, 0.5 * bin_width, 2.0 * bin_width};
  Eigen::VectorXd omega(0), gamma(0);
  auto logp = [&](const Eigen::VectorXd& w, const Eigen::VectorXd& g) {
    try {
      return posterior({w, g}).logp;
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  auto refine = [&](Eigen::VectorXd w, Eigen::VectorXd g) {
    const Eigen::Index n = w.size();
    const double to_bins = 1.0 / bin_width;
    Eigen::VectorXd x0(2 * n);
    x0.head(n) = w * to_bins;
    x0.tail(n) = g.array().max(1e-3 * bin_width).log();
    auto fold = [&](const Eigen::VectorXd& v) {
      return Eigen::VectorXd(v.unaryExpr([&](double f) { return fold_frequency(f / to_bins, nyquist); }));
    };
    auto objective = [&](const Eigen::VectorXd& x) {
      const Eigen::VectorXd ww = fold(x.head(n));
      const Eigen::VectorXd gg = x.tail(n).array().exp();
      return -logp(ww, gg);
    };
    BfgsOptions bo;
    bo.max_iterations = 60;
    const BfgsResult br = minimize_bfgs(objective, x0, bo);
    return std::pair<Eigen::VectorXd, Eigen::VectorXd>{fold(br.x.head(n)),
                                                       br.x.tail(n).array().exp()};
  };
  std::vector<Eigen::VectorXd> out;
  for (int m = 0; m < transitions; ++m) {
    Eigen::VectorXd w(m + 1), g(m + 1);
    w.head(m) = omega;
    g.head(m) = gamma;
    // Scan profile: best value over trial widths at each grid frequency.
    std::vector<double> freq, value, width;
    for (double f = 0.5 * bin_width; f < nyquist; f += opts.scan_step_bins * bin_width) {
      bool clash = false;
      for (int i = 0; i < m; ++i) clash = clash || std::abs(omega[i] - f) < 0.5 * bin_width;
      w[m] = f;
      double best = -std::numeric_limits<double>::infinity(), best_g = 0.0;
      if (!clash)
        for (double trial : widths) {
          g[m] = trial;
          const double v = logp(w, g);
          if (v > best) {
            best = v;
            best_g = trial;
          }
        }
      freq.push_back(f);
      value.push_back(best);
      width.push_back(best_g);
    }
    // Local maxima of the profile, best first.
    std::vector<std::size_t> peaks;
    for (std::size_t i = 0; i < value.size(); ++i) {
      if (!std::isfinite(value[i])) continue;
      const bool left = i == 0 || value[i] >= value[i - 1];
      const bool right = i + 1 == value.size() || value[i] > value[i + 1];
      if (left && right) peaks.push_back(i);
    }
    if (peaks.empty()) break;
    std::stable_sort(peaks.begin(), peaks.end(), [&](std::size_t x, std::size_t y) { return value[x] > value[y]; });
    const bool last = m + 1 == transitions;
    const std::size_t keep = last ? std::min<std::size_t>(peaks.size(), static_cast<std::size_t>(opts.final_alternatives)) : 1;
    for (std::size_t c = 0; c < keep; ++c) {
      w[m] = freq[peaks[c]];
      g[m] = width[peaks[c]];
      auto [rw, rg] = refine(w, g);
      if (c == 0) {
        omega = rw;
        gamma = rg;
      }
      if (last) out.push_back(rw);
    }
  }
  return out;
}

}  // namespace detail

/// Candidate frequency vectors of length M. With M resolved peaks there is a
/// single candidate; with K < M peaks, each peak in turn is split into
/// M - K + 1 lines spaced by the doublet offset.
inline std::vector<Eigen::VectorXd> seed_frequencies(const TraceSet& traces, int transitions,
                                                     const SeedOptions& opts = {}) {
  if (transitions < 1) throw InvalidArgument("need at least one transition");
  const Periodogram pg = summed_periodogram(traces);
  const auto peaks = find_peaks(pg, transitions, opts);
  const int found = static_cast<int>(peaks.size());
  std::vector<Eigen::VectorXd> out;
  auto finish = [&](std::vector<double> f) {
    std::sort(f.begin(), f.end());
    for (auto& x : f) x = std::max(x, 0.25 * pg.bin_width);
    out.push_back(Eigen::Map<Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size())));
  };
  if (opts.sequential)
    for (const Eigen::VectorXd& g : detail::sequential_seed(traces, transitions, pg.bin_width, opts))
      finish(std::vector<double>(g.data(), g.data() + g.size()));
  if (found >= transitions) {
    std::vector<double> f;
    for (const auto& pk : peaks) f.push_back(pk.frequency);
    finish(f);
    return out;
  }
  const int deficit = transitions - found;
  const double step = opts.doublet_offset_bins * pg.bin_width;
  for (int split = 0; split < found; ++split) {
    std::vector<double> f;
    for (int i = 0; i < found; ++i) {
      const double centre = peaks[static_cast<std::size_t>(i)].frequency;
      if (i != split) {
        f.push_back(centre);
        continue;
      }
      for (int j = 0; j <= deficit; ++j) f.push_back(centre + (j - 0.5 * deficit) * step);
    }
    finish(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-start maximization

struct EstimatorOptions {
  int n_restarts = 8;
  bool fit_damping = true;             ///< false: Gamma pinned to 0 (pure Hamiltonian model)
  double gamma_init_low = 1e-3;        ///< initial Gamma ~ log-uniform [low, high] x median(omega)
  double gamma_init_high = 1e-1;
  double gamma_floor = 1e-12;
  bool polish = true;                  ///< Gauss-Newton refinement after each quasi-Newton run
  BfgsOptions bfgs{};
};

struct RestartRecord {
  int seed_index = 0;
  Eigen::VectorXd seed_omega;
  Eigen::VectorXd initial_gamma;
  Eigen::VectorXd final_omega;
  Eigen::VectorXd final_gamma;
  double final_logp = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool ok = false;
  std::string status;
};

struct EstimationResult {
  BasisKind kind = BasisKind::RealSymmetric;
  bool fit_damping = true;
  TransitionParams params;
  PosteriorValue posterior;
  std::vector<RestartRecord> restarts;
  int best_restart = -1;
};

namespace detail {

// Sorts omega ascending and carries Gamma along.
inline TransitionParams sorted_params(const Eigen::VectorXd& omega, const Eigen::VectorXd& gamma) {
  std::vector<int> idx(static_cast<std::size_t>(omega.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return omega[a] < omega[b]; });
  TransitionParams p;
  p.omega.resize(omega.size());
  p.Gamma.resize(omega.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    p.omega[static_cast<Eigen::Index>(i)] = omega[idx[i]];
    p.Gamma[static_cast<Eigen::Index>(i)] = gamma[idx[i]];
  }
  return p;
}

}  // namespace detail

namespace detail {

// Per-trace residual energies after least-squares projection onto the basis,
// via Householder QR (more accurate than the Gram route when residuals are
// tiny). Returns false if the basis is rank deficient.
inline bool residual_matrix(const BasisFamily& family, const Eigen::VectorXd& times, const Eigen::MatrixXd& data,
                            Eigen::MatrixXd& residuals) {
  const Eigen::MatrixXd g = evaluate_basis(family, times).transpose();  // N_t x m_b
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(g);
  if (qr.rank() < g.cols()) return false;
  const Eigen::MatrixXd coef = qr.solve(data.transpose());
  residuals = data - (g * coef).transpose();
  return true;
}

// Gauss-Newton / Levenberg-Marquardt refinement of sum_kl log R_kl, the
// quantity the log posterior is monotone in (every trace shares the same
// negative exponent). Works on the same (bins, log rate) variables as the
// quasi-Newton stage. Returns the refined point, never a worse one.
template <class Unpack>
Eigen::VectorXd gauss_newton_polish(const Eigen::VectorXd& x0, Unpack&& unpack, BasisKind kind,
                                    const Eigen::VectorXd& times, const Eigen::MatrixXd& data,
                                    const Eigen::VectorXd& energy, int max_iterations = 60) {
  std::vector<Eigen::Index> live;
  for (Eigen::Index i = 0; i < energy.size(); ++i)
    if (energy[i] > 0.0) live.push_back(i);
  if (live.empty()) return x0;
  Eigen::MatrixXd d(static_cast<Eigen::Index>(live.size()), data.cols());
  for (std::size_t i = 0; i < live.size(); ++i) d.row(static_cast<Eigen::Index>(i)) = data.row(live[i]);

  auto residuals = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& r) {
    try {
      return residual_matrix(BasisFamily{kind, unpack(x)}, times, d, r);
    } catch (const Error&) {
      return false;
    }
  };
  auto cost = [&](const Eigen::MatrixXd& r) {
    double c = 0.0;
    for (Eigen::Index i = 0; i < r.rows(); ++i) c += std::log(std::max(r.row(i).squaredNorm(), 1e-300));
    return c;
  };

  Eigen::VectorXd x = x0;
  Eigen::MatrixXd r;
  if (!residuals(x, r)) return x0;
  double c = cost(r);
  double mu = 1e-3;
  const Eigen::Index n = x.size();
  for (int it = 0; it < max_iterations; ++it) {
    // Central-difference Jacobian of every residual row.
    std::vector<Eigen::MatrixXd> jac(static_cast<std::size_t>(n));
    bool ok = true;
    for (Eigen::Index j = 0; j < n && ok; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      Eigen::MatrixXd rp, rm;
      ok = residuals(xp, rp) && residuals(xm, rm);
      if (ok) jac[static_cast<std::size_t>(j)] = (rp - rm) / (2.0 * h);
    }
    if (!ok) break;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      const double ri = std::max(r.row(i).squaredNorm(), 1e-300);
      Eigen::MatrixXd ji(n, r.cols());
      for (Eigen::Index j = 0; j < n; ++j) ji.row(j) = jac[static_cast<std::size_t>(j)].row(i);
      a += 2.0 * ji * ji.transpose() / ri;
      grad += 2.0 * ji * r.row(i).transpose() / ri;
    }
    bool improved = false;
    for (int tries = 0; tries < 12 && !improved; ++tries) {
      Eigen::MatrixXd damped = a;
      damped.diagonal() += mu * a.diagonal().cwiseMax(1e-300);
      const Eigen::VectorXd step = damped.ldlt().solve(-grad);
      if (!step.allFinite()) {
        mu *= 10.0;
        continue;
      }
      const Eigen::VectorXd xn = x + step;
      Eigen::MatrixXd rn;
      if (residuals(xn, rn)) {
        const double cn = cost(rn);
        if (cn < c) {
          const double gain = c - cn;
          x = xn;
          r = std::move(rn);
          c = cn;
          mu = std::max(mu / 10.0, 1e-12);
          improved = true;
          if (gain < 1e-12 * std::max(1.0, std::abs(c))) return x;
          break;
        }
      }
      mu *= 10.0;
    }
    if (!improved) break;
  }
  return x;
}

}  // namespace detail

/// Quasi-Newton ascent of the log posterior from every seed and random
/// initial damping; keeps the terminal point with the largest logp.
/// Frequencies are optimized in units of spectral bins (omega T / 2 pi) and
/// rates as log(Gamma).
inline EstimationResult maximize_posterior(const TraceSet& traces, int transitions, BasisKind kind,
                                           const std::vector<Eigen::VectorXd>& seeds, const EstimatorOptions& opts,
                                           Philox& rng) {
  if (seeds.empty()) throw InvalidArgument("no frequency seeds");
  if (opts.n_restarts < 1) throw InvalidArgument("n_restarts must be >= 1");
  const PosteriorEvaluator posterior(traces, kind);
  const int m_count = transitions;
  const double duration = posterior.times()[posterior.num_times() - 1];
  const double to_bins = duration / (2.0 * std::numbers::pi);

  const double nyquist = std::numbers::pi / uniform_spacing(traces.times);
  auto unpack = [&](const Eigen::VectorXd& x) {
    TransitionParams p;
    p.omega = x.head(m_count).unaryExpr([&](double v) { return detail::fold_frequency(v / to_bins, nyquist); });
    p.Gamma = opts.fit_damping ? Eigen::VectorXd(x.tail(m_count).array().exp().max(opts.gamma_floor))
                               : Eigen::VectorXd::Zero(m_count);
    return p;
  };
  auto objective = [&](const Eigen::VectorXd& x) {
    try {
      const PosteriorValue pv = posterior(unpack(x));
      // A collapsed basis (coincident lines, a rate so large the function
      // vanishes on the grid) is not a valid M-line model.
      if (pv.effective_basis_count < BasisFamily{kind, unpack(x)}.basis_count())
        return std::numeric_limits<double>::infinity();
      return -pv.logp;
    } catch (const InvalidArgument&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  EstimationResult result;
  result.kind = kind;
  result.fit_damping = opts.fit_damping;
  const int restarts = opts.fit_damping ? opts.n_restarts : 1;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const Eigen::VectorXd& seed = seeds[s];
    if (seed.size() != m_count) throw InvalidArgument("seed length differs from transition count");
    std::vector<double> sorted(seed.data(), seed.data() + seed.size());
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    for (int r = 0; r < restarts; ++r) {
      RestartRecord rec;
      rec.seed_index = static_cast<int>(s);
      rec.seed_omega = seed;
      rec.initial_gamma = Eigen::VectorXd::Zero(m_count);
      if (opts.fit_damping)
        for (int m = 0; m < m_count; ++m)
          rec.initial_gamma[m] =
              median * std::exp(rng.uniform(std::log(opts.gamma_init_low), std::log(opts.gamma_init_high)));
      Eigen::VectorXd x0(opts.fit_damping ? 2 * m_count : m_count);
      x0.head(m_count) = seed * to_bins;
      if (opts.fit_damping) x0.tail(m_count) = rec.initial_gamma.array().log();

      BfgsResult br = minimize_bfgs(objective, x0, opts.bfgs);
      if (opts.polish && std::isfinite(br.f)) {
        const Eigen::VectorXd xp = detail::gauss_newton_polish(br.x, unpack, kind, posterior.times(),
                                                               posterior.data(), posterior.energy());
        const double fp = objective(xp);
        if (fp <= br.f) {
          br.x = xp;
          br.f = fp;
        }
      }
      const TransitionParams fin = unpack(br.x);
      rec.final_omega = fin.omega;
      rec.final_gamma = fin.Gamma;
      rec.final_logp = -br.f;
      rec.iterations = br.iterations;
      rec.status = br.status;
      rec.ok = std::isfinite(br.f) && (br.accepted_steps > 0 || br.converged);
      if (rec.ok && (result.best_restart < 0 ||
                     rec.final_logp > result.restarts[static_cast<std::size_t>(result.best_restart)].final_logp))
        result.best_restart = static_cast<int>(result.restarts.size());
      result.restarts.push_back(std::move(rec));
    }
  }
  if (result.best_restart < 0) throw OptimizerDiverged("every restart failed to make line-search progress");
  const auto& best = result.restarts[static_cast<std::size_t>(result.best_restart)];
  result.params = detail::sorted_params(best.final_omega, best.final_gamma);
  result.posterior = posterior(result.params);
  return result;
}

/// Posterior-mean linear coefficients at fixed (omega, Gamma). The basis
/// expansion carries the factor 2 of the probability formula, so cosine and
/// sine coefficients are halved to give a and b.
inline SignalCoefficients extract_coefficients(const TransitionParams& params, BasisKind kind, const TraceSet& traces) {
  const BasisFamily family{kind, params};
  const OrthoProjection op = orthogonalize(evaluate_basis(family, traces.time_vector()));
  require_full_rank(op);
  const int m_count = params.size();
  const int mb = family.basis_count();
  // x = E diag(alpha^{-1/2}) h
  const Eigen::MatrixXd back = op.eigenvectors * op.eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal();
  SignalCoefficients coeffs(traces.dim, m_count);
  for (int k = 0; k < traces.dim; ++k)
    for (int l = 0; l < traces.dim; ++l) {
      const Eigen::VectorXd h = op.project(traces.trace(k, l));
      const Eigen::VectorXd x = back * h;
      for (int m = 0; m < m_count; ++m) {
        if (kind == BasisKind::General) {
          coeffs.a(k, l, m) = 0.5 * x[2 * m];
          coeffs.b(k, l, m) = 0.5 * x[2 * m + 1];
        } else {
          coeffs.a(k, l, m) = 0.5 * x[m];
        }
      }
      coeffs.c(k, l) = x[mb - 1];
    }
  return coeffs;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json coefficients_to_json(const SignalCoefficients& c) {
  nlohmann::json a = nlohmann::json::array(), b = nlohmann::json::array(), cc = nlohmann::json::array();
  for (int k = 0; k < c.dim(); ++k)
    for (int l = 0; l < c.dim(); ++l) {
      std::vector<double> ra, rb;
      for (int m = 0; m < c.transitions(); ++m) {
        ra.push_back(c.a(k, l, m));
        rb.push_back(c.b(k, l, m));
      }
      a.push_back(ra);
      b.push_back(rb);
      cc.push_back(c.c(k, l));
    }
  return {{"a", a}, {"b", b}, {"c", cc}};
}

inline SignalCoefficients coefficients_from_json(const nlohmann::json& j, int dim) {
  try {
    const auto& a = j.at("a");
    const auto& b = j.at("b");
    const auto& c = j.at("c");
    if (a.size() != static_cast<std::size_t>(dim * dim)) throw ParseError("coefficient table has wrong size");
    const int m_count = static_cast<int>(a.at(0).size());
    SignalCoefficients out(dim, m_count);
    for (int k = 0; k < dim; ++k)
      for (int l = 0; l < dim; ++l) {
        const auto i = static_cast<std::size_t>(k * dim + l);
        for (int m = 0; m < m_count; ++m) {
          out.a(k, l, m) = a.at(i).at(static_cast<std::size_t>(m)).get<double>();
          out.b(k, l, m) = b.at(i).at(static_cast<std::size_t>(m)).get<double>();
        }
        out.c(k, l) = c.at(i).get<double>();
      }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("coefficients: ") + e.what());
  }
}

inline nlohmann::json to_json(const EstimationResult& est, const SignalCoefficients& coeffs, int dim) {
  nlohmann::json j;
  j["dim"] = dim;
  j["kind"] = to_string(est.kind);
  j["fit_damping"] = est.fit_damping;
  j["omega"] = vector_to_json(est.params.omega);
  j["Gamma"] = vector_to_json(est.params.Gamma);
  j["logp"] = est.posterior.logp;
  j["saturated_traces"] = est.posterior.saturated;
  const auto cj = coefficients_to_json(coeffs);
  j["a"] = cj["a"];
  j["b"] = cj["b"];
  j["c"] = cj["c"];
  nlohmann::json log = nlohmann::json::array();
  for (const auto& r : est.restarts)
    log.push_back({{"seed_index", r.seed_index},
                   {"seed_omega", vector_to_json(r.seed_omega)},
                   {"initial_Gamma", vector_to_json(r.initial_gamma)},
                   {"final_omega", vector_to_json(r.final_omega)},
                   {"final_Gamma", vector_to_json(r.final_gamma)},
                   {"final_logp", r.final_logp},
                   {"iterations", r.iterations},
                   {"ok", r.ok},
                   {"status", r.status}});
  j["restart_log"] = log;
  j["best_restart"] = est.best_restart;
  return j;
}

}  // namespace qsid
