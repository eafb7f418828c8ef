#pragma once

// Forward model of an N-level system whose dephasing operator commutes with
// the Hamiltonian. Both are diagonal in a joint eigenbasis; W maps the
// measurement basis onto it, so that H = W^dag diag(lambda) W and
// V = W^dag diag(gamma) W.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "qsid/errors.hpp"

namespace qsid {

using Complex = std::complex<double>;

/// Relative threshold below which two transition frequencies are treated as
/// coincident.
inline constexpr double kDegeneracyTolerance = 1e-6;

struct SystemSpec {
  int dim = 0;
  Eigen::VectorXd lambda;        ///< Hamiltonian eigenvalues, ascending
  Eigen::VectorXd gamma;         ///< dephasing-operator eigenvalues
  Eigen::MatrixXcd basis_map;    ///< W, rows indexed by eigenlevel
  bool real_symmetric = false;

  /// Throws InvalidArgument if any structural invariant is broken.
  void validate() const {
    if (dim < 2) throw InvalidArgument("dim must be >= 2");
    if (lambda.size() != dim || gamma.size() != dim)
      throw InvalidArgument("lambda/gamma must have length dim");
    if (basis_map.rows() != dim || basis_map.cols() != dim)
      throw InvalidArgument("basis_map must be dim x dim");
    for (int i = 1; i < dim; ++i)
      if (lambda[i] < lambda[i - 1]) throw InvalidArgument("lambda must be ascending");
    const double err =
        (basis_map.adjoint() * basis_map - Eigen::MatrixXcd::Identity(dim, dim)).cwiseAbs().maxCoeff();
    if (!(err <= 1e-12)) throw InvalidArgument("basis_map is not unitary (err " + std::to_string(err) + ")");
    if (real_symmetric && basis_map.imag().cwiseAbs().maxCoeff() != 0.0)
      throw InvalidArgument("real_symmetric spec has complex basis_map");
  }

  Eigen::MatrixXcd hamiltonian() const {
    return basis_map.adjoint() * lambda.cast<Complex>().asDiagonal() * basis_map;
  }

  Eigen::MatrixXcd dephasing_operator() const {
    return basis_map.adjoint() * gamma.cast<Complex>().asDiagonal() * basis_map;
  }

  /// True when every dephasing rate vanishes.
  bool hamiltonian_only() const {
    return gamma.size() == 0 || (gamma.array() == gamma[0]).all();
  }

  /// Eigenvalue ties (flagged, not rejected).
  bool has_degenerate_levels() const {
    for (int i = 1; i < dim; ++i)
      if (lambda[i] == lambda[i - 1]) return true;
    return false;
  }
};

struct TransitionParams {
  Eigen::VectorXd omega;   ///< transition frequencies, ascending, > 0
  Eigen::VectorXd Gamma;   ///< dephasing rates, >= 0

  int size() const { return static_cast<int>(omega.size()); }

  void validate() const {
    if (omega.size() != Gamma.size()) throw InvalidArgument("omega/Gamma length mismatch");
    for (int m = 0; m < size(); ++m) {
      if (!(omega[m] > 0.0)) throw InvalidArgument("omega must be positive");
      if (m > 0 && !(omega[m] > omega[m - 1])) throw InvalidArgument("omega must be strictly ascending");
      if (!(Gamma[m] >= 0.0)) throw InvalidArgument("Gamma must be nonnegative");
    }
  }
};

/// Flat transition index m <-> eigenlevel pair (mu, nu), nu > mu.
struct TransitionIndexMap {
  std::vector<std::pair<int, int>> pairs;

  int size() const { return static_cast<int>(pairs.size()); }

  int index_of(int mu, int nu) const {
    if (mu > nu) std::swap(mu, nu);
    for (int m = 0; m < size(); ++m)
      if (pairs[m] == std::pair{mu, nu}) return m;
    return -1;
  }
};

/// Linear coefficients of the damped-sinusoid expansion of every trace:
/// p_kl(t) = c_kl + 2 sum_m exp(-Gamma_m t) [a_kl;m cos(omega_m t) + b_kl;m sin(omega_m t)].
class SignalCoefficients {
 public:
  SignalCoefficients() = default;
  SignalCoefficients(int dim, int transitions)
      : dim_(dim),
        transitions_(transitions),
        a_(static_cast<std::size_t>(dim) * dim * transitions, 0.0),
        b_(a_.size(), 0.0),
        c_(static_cast<std::size_t>(dim) * dim, 0.0) {}

  int dim() const { return dim_; }
  int transitions() const { return transitions_; }

  double& a(int k, int l, int m) { return a_[index(k, l, m)]; }
  double a(int k, int l, int m) const { return a_[index(k, l, m)]; }
  double& b(int k, int l, int m) { return b_[index(k, l, m)]; }
  double b(int k, int l, int m) const { return b_[index(k, l, m)]; }
  double& c(int k, int l) { return c_[static_cast<std::size_t>(k) * dim_ + l]; }
  double c(int k, int l) const { return c_[static_cast<std::size_t>(k) * dim_ + l]; }

  const std::vector<double>& a_values() const { return a_; }
  const std::vector<double>& b_values() const { return b_; }
  const std::vector<double>& c_values() const { return c_; }

 private:
  std::size_t index(int k, int l, int m) const {
    return (static_cast<std::size_t>(k) * dim_ + l) * transitions_ + m;
  }

  int dim_ = 0;
  int transitions_ = 0;
  std::vector<double> a_, b_, c_;
};

namespace detail {

// All level pairs ordered by ascending frequency; no degeneracy check.
inline std::pair<TransitionParams, TransitionIndexMap> all_transitions(const SystemSpec& spec) {
  struct Row {
    double omega, Gamma;
    int mu, nu;
  };
  std::vector<Row> rows;
  for (int mu = 0; mu < spec.dim; ++mu)
    for (int nu = mu + 1; nu < spec.dim; ++nu) {
      const double dg = spec.gamma[mu] - spec.gamma[nu];
      rows.push_back({std::abs(spec.lambda[nu] - spec.lambda[mu]), 0.5 * dg * dg, mu, nu});
    }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) { return x.omega < y.omega; });
  TransitionParams params;
  params.omega.resize(static_cast<Eigen::Index>(rows.size()));
  params.Gamma.resize(static_cast<Eigen::Index>(rows.size()));
  TransitionIndexMap map;
  for (std::size_t m = 0; m < rows.size(); ++m) {
    params.omega[static_cast<Eigen::Index>(m)] = rows[m].omega;
    params.Gamma[static_cast<Eigen::Index>(m)] = rows[m].Gamma;
    map.pairs.emplace_back(rows[m].mu, rows[m].nu);
  }
  return {params, map};
}

// <l|xi_nu><xi_nu|k> for all nu.
inline Eigen::VectorXcd overlaps(const SystemSpec& spec, int k, int l) {
  Eigen::VectorXcd z(spec.dim);
  for (int nu = 0; nu < spec.dim; ++nu) z[nu] = std::conj(spec.basis_map(nu, l)) * spec.basis_map(nu, k);
  return z;
}

}  // namespace detail

/// Transition frequencies |lambda_mu - lambda_nu| and rates
/// (gamma_mu - gamma_nu)^2 / 2, sorted by frequency.
inline std::pair<TransitionParams, TransitionIndexMap> transition_params_from_spec(const SystemSpec& spec) {
  spec.validate();
  auto result = detail::all_transitions(spec);
  const auto& omega = result.first.omega;
  const double scale = omega.size() ? omega.maxCoeff() : 0.0;
  if (omega.size() && !(scale > 0.0)) throw DegenerateSpectrum("all levels coincide");
  for (Eigen::Index m = 0; m < omega.size(); ++m) {
    if (omega[m] < kDegeneracyTolerance * scale)
      throw DegenerateSpectrum("zero transition frequency (degenerate levels)");
    if (m > 0 && omega[m] - omega[m - 1] < kDegeneracyTolerance * scale)
      throw DegenerateSpectrum("transition frequencies " + std::to_string(m - 1) + " and " + std::to_string(m) +
                               " coincide");
  }
  return result;
}

/// a = Re(conj(z_mu) z_nu), b = Im(conj(z_mu) z_nu), c = sum |z_nu|^2, where
/// z_nu = <l|xi_nu><xi_nu|k> and (mu, nu) is the level pair of transition m
/// with lambda_nu >= lambda_mu.
inline SignalCoefficients exact_coefficients(const SystemSpec& spec) {
  spec.validate();
  const auto [params, map] = detail::all_transitions(spec);
  const int n = spec.dim;
  SignalCoefficients coeffs(n, map.size());
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) {
      const Eigen::VectorXcd z = detail::overlaps(spec, k, l);
      coeffs.c(k, l) = z.squaredNorm();
      for (int m = 0; m < map.size(); ++m) {
        const auto [mu, nu] = map.pairs[m];
        const Complex prod = std::conj(z[mu]) * z[nu];
        coeffs.a(k, l, m) = prod.real();
        coeffs.b(k, l, m) = spec.real_symmetric ? 0.0 : prod.imag();
      }
    }
  return coeffs;
}

/// Evaluates all N^2 probability traces of a fixed system; the coefficient
/// expansion is computed once.
class ProbabilityModel {
 public:
  explicit ProbabilityModel(const SystemSpec& spec)
      : dim_(spec.dim), params_(detail::all_transitions(spec).first), coeffs_(exact_coefficients(spec)) {}

  int dim() const { return dim_; }
  const TransitionParams& params() const { return params_; }
  const SignalCoefficients& coefficients() const { return coeffs_; }

  double probability(int k, int l, double t) const {
    double p = coeffs_.c(k, l);
    for (int m = 0; m < params_.size(); ++m) {
      const double decay = std::exp(-t * params_.Gamma[m]);
      const double phase = params_.omega[m] * t;
      p += 2.0 * decay * (coeffs_.a(k, l, m) * std::cos(phase) + coeffs_.b(k, l, m) * std::sin(phase));
    }
    return p;
  }

  /// Row of outcome probabilities for initial state k.
  Eigen::VectorXd distribution(int k, double t) const {
    Eigen::VectorXd p(dim_);
    for (int l = 0; l < dim_; ++l) p[l] = probability(k, l, t);
    return p;
  }

 private:
  int dim_;
  TransitionParams params_;
  SignalCoefficients coeffs_;
};

/// Probability of measuring |l> at time t after preparing |k>.
inline double exact_probability(const SystemSpec& spec, int k, int l, double t) {
  if (k < 0 || k >= spec.dim || l < 0 || l >= spec.dim) throw InvalidArgument("basis index out of range");
  if (t < 0.0) throw InvalidArgument("time must be nonnegative");
  return ProbabilityModel(spec).probability(k, l, t);
}

/// Density matrix in the measurement basis at time t: each coherence of the
/// eigenbasis representation rotates and decays independently, and the
/// result is rotated back with W only at readout.
inline Eigen::MatrixXcd evolve_density(const SystemSpec& spec, const Eigen::MatrixXcd& rho0, double t) {
  const Eigen::MatrixXcd& w = spec.basis_map;
  Eigen::MatrixXcd rt = w * rho0 * w.adjoint();
  for (int mu = 0; mu < spec.dim; ++mu)
    for (int nu = 0; nu < spec.dim; ++nu) {
      if (mu == nu) continue;
      const double omega = spec.lambda[mu] - spec.lambda[nu];
      const double dg = spec.gamma[mu] - spec.gamma[nu];
      rt(mu, nu) *= std::exp(Complex(-0.5 * dg * dg * t, -omega * t));
    }
  return w.adjoint() * rt * w;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json complex_matrix_to_json(const Eigen::MatrixXcd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXcd complex_matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j.at(i).size()) != cols) throw ParseError("ragged complex matrix");
    for (Eigen::Index k = 0; k < cols; ++k) {
      const auto& e = j.at(i).at(k);
      m(i, k) = Complex(e.at(0).get<double>(), e.at(1).get<double>());
    }
  }
  return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json to_json(const SystemSpec& spec) {
  nlohmann::json j;
  j["dim"] = spec.dim;
  j["lambda"] = vector_to_json(spec.lambda);
  j["gamma"] = vector_to_json(spec.gamma);
  j["basis_map"] = complex_matrix_to_json(spec.basis_map);
  j["real_symmetric"] = spec.real_symmetric;
  return j;
}

inline SystemSpec system_spec_from_json(const nlohmann::json& j) {
  SystemSpec spec;
  try {
    spec.dim = j.at("dim").get<int>();
    spec.lambda = vector_from_json(j.at("lambda"));
    spec.gamma = vector_from_json(j.at("gamma"));
    spec.basis_map = complex_matrix_from_json(j.at("basis_map"));
    spec.real_symmetric = j.at("real_symmetric").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("SystemSpec: ") + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace qsid
