#pragma once

// BFGS quasi-Newton minimizer with a strong-Wolfe line search that
// interpolates with cubics, using central finite-difference gradients.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

namespace qsid {

struct BfgsOptions {
  int max_iterations = 400;
  double gradient_tolerance = 1e-9;   ///< on ||g||_inf / max(1, |f|)
  double function_tolerance = 1e-14;  ///< on |f_prev - f| / max(1, |f|)
  double fd_relative_step = 1e-7;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_line_search = 40;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  int accepted_steps = 0;
  bool converged = false;
  std::string status;
};

namespace detail {

template <class F>
double safe_eval(F& f, const Eigen::VectorXd& x, int& evals) {
  ++evals;
  const double v = f(x);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

inline double fd_step(double xi, double rel) { return rel * std::max(1.0, std::abs(xi)); }

template <class F>
Eigen::VectorXd central_gradient(F& f, const Eigen::VectorXd& x, double rel, int& evals) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = fd_step(x[i], rel);
    xp[i] = x[i] + h;
    const double fp = safe_eval(f, xp, evals);
    xp[i] = x[i] - h;
    const double fm = safe_eval(f, xp, evals);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Minimizer of the cubic through (a, fa, da), (b, fb, db), or NaN.
inline double cubic_minimizer(double a, double fa, double da, double b, double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = (b > a ? 1.0 : -1.0) * std::sqrt(disc);
  const double denom = db - da + 2.0 * d2;
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return b - (b - a) * (db + d2 - d1) / denom;
}

}  // namespace detail

/// Central-difference gradient with relative step `rel`.
template <class F>
Eigen::VectorXd numerical_gradient(F&& f, const Eigen::VectorXd& x, double rel = 1e-7) {
  int evals = 0;
  return detail::central_gradient(f, x, rel, evals);
}

template <class F>
BfgsResult minimize_bfgs(F&& f, const Eigen::VectorXd& x0, const BfgsOptions& opts = {}) {
  const Eigen::Index n = x0.size();
  BfgsResult res;
  res.x = x0;
  res.f = detail::safe_eval(f, res.x, res.evaluations);
  if (!std::isfinite(res.f)) {
    res.status = "non-finite objective at start";
    return res;
  }
  Eigen::VectorXd g = detail::central_gradient(f, res.x, opts.fd_relative_step, res.evaluations);
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;

  struct Point {
    double alpha, phi, dphi;
  };

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    if (g.cwiseAbs().maxCoeff() <= opts.gradient_tolerance * std::max(1.0, std::abs(res.f))) {
      res.converged = true;
      res.status = "gradient tolerance";
      return res;
    }
    Eigen::VectorXd p = -hinv * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      p = -g;
      slope = g.dot(p);
    }
    const double pscale = p.cwiseAbs().maxCoeff();
    const double h_dir = opts.fd_relative_step * std::max(1.0, res.x.cwiseAbs().maxCoeff()) / pscale;

    auto eval_point = [&](double alpha) {
      Point pt{alpha, 0.0, 0.0};
      pt.phi = detail::safe_eval(f, Eigen::VectorXd(res.x + alpha * p), res.evaluations);
      if (std::isfinite(pt.phi)) {
        const double fp = detail::safe_eval(f, Eigen::VectorXd(res.x + (alpha + h_dir) * p), res.evaluations);
        const double fm = detail::safe_eval(f, Eigen::VectorXd(res.x + (alpha - h_dir) * p), res.evaluations);
        pt.dphi = (fp - fm) / (2.0 * h_dir);
        if (!std::isfinite(pt.dphi)) pt.dphi = 0.0;
      }
      return pt;
    };

    const Point start{0.0, res.f, slope};
    const double c1 = opts.wolfe_c1, c2 = opts.wolfe_c2;
    auto sufficient = [&](const Point& pt) { return pt.phi <= start.phi + c1 * pt.alpha * start.dphi; };
    auto curvature = [&](const Point& pt) { return std::abs(pt.dphi) <= -c2 * start.dphi; };

    Point best = start;
    auto track = [&](const Point& pt) {
      if (pt.phi < best.phi) best = pt;
    };

    auto zoom = [&](Point lo, Point hi, int budget) -> Point {
      for (int it = 0; it < budget; ++it) {
        double a = detail::cubic_minimizer(lo.alpha, lo.phi, lo.dphi, hi.alpha, hi.phi,
                                           std::isfinite(hi.phi) ? hi.dphi : 0.0);
        const double left = std::min(lo.alpha, hi.alpha), right = std::max(lo.alpha, hi.alpha);
        const double margin = 0.1 * (right - left);
        if (!std::isfinite(a) || !std::isfinite(hi.phi) || a < left + margin || a > right - margin)
          a = 0.5 * (lo.alpha + hi.alpha);
        const Point pt = eval_point(a);
        track(pt);
        if (!sufficient(pt) || pt.phi >= lo.phi) {
          hi = pt;
        } else {
          if (curvature(pt)) return pt;
          if (pt.dphi * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
          lo = pt;
        }
        if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, lo.alpha)) break;
      }
      return best;
    };

    double alpha = (!scaled && res.iterations == 0) ? std::min(1.0, 1.0 / std::max(1e-300, g.cwiseAbs().maxCoeff())) : 1.0;
    Point prev = start;
    Point accepted = start;
    int used = 0;
    for (; used < opts.max_line_search; ++used) {
      const Point pt = eval_point(alpha);
      track(pt);
      if (!sufficient(pt) || (used > 0 && pt.phi >= prev.phi)) {
        accepted = zoom(prev, pt, opts.max_line_search - used);
        break;
      }
      if (curvature(pt)) {
        accepted = pt;
        break;
      }
      if (pt.dphi >= 0.0) {
        accepted = zoom(pt, prev, opts.max_line_search - used);
        break;
      }
      prev = pt;
      alpha *= 2.0;
    }
    if (used == opts.max_line_search) accepted = best;
    if (!(accepted.phi < start.phi)) {
      if (!hinv.isIdentity()) {
        hinv.setIdentity();
        continue;
      }
      res.status = "line search made no progress";
      res.converged = res.accepted_steps > 0;
      return res;
    }

    const Eigen::VectorXd s = accepted.alpha * p;
    const Eigen::VectorXd x_new = res.x + s;
    const Eigen::VectorXd g_new = detail::central_gradient(f, x_new, opts.fd_relative_step, res.evaluations);
    const Eigen::VectorXd y = g_new - g;
    const double f_old = res.f;
    res.x = x_new;
    res.f = accepted.phi;
    g = g_new;
    ++res.accepted_steps;

    const double ys = y.dot(s);
    if (ys > 1e-12 * y.norm() * s.norm()) {
      if (!scaled) {
        hinv *= ys / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / ys;
      const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
      hinv = left * hinv * left.transpose() + rho * s * s.transpose();
    }
    if (std::abs(f_old - res.f) <= opts.function_tolerance * std::max(1.0, std::abs(res.f))) {
      res.converged = true;
      res.status = "function tolerance";
      ++res.iterations;
      return res;
    }
  }
  res.status = "iteration limit";
  return res;
}

struct LeastSquaresOptions {
  int max_iterations = 200;
  double fd_relative_step = 1e-7;
  double tolerance = 1e-15;  ///< relative decrease of the squared residual norm
};

struct LeastSquaresResult {
  Eigen::VectorXd x;
  double cost = std::numeric_limits<double>::infinity();  ///< squared residual norm
  int iterations = 0;
};

/// Levenberg-Marquardt on a residual vector function with a central
/// finite-difference Jacobian. Never returns a point worse than x0.
template <class R>
LeastSquaresResult levenberg_marquardt(R&& residual, const Eigen::VectorXd& x0, const LeastSquaresOptions& opts = {}) {
  LeastSquaresResult res;
  res.x = x0;
  Eigen::VectorXd r = residual(res.x);
  res.cost = r.allFinite() ? r.squaredNorm() : std::numeric_limits<double>::infinity();
  if (!std::isfinite(res.cost)) return res;
  const Eigen::Index n = x0.size();
  double mu = 1e-3;
  Eigen::MatrixXd jac(r.size(), n);
  for (res.iterations = 0; res.iterations < opts.max_iterations && res.cost > 0.0; ++res.iterations) {
    Eigen::VectorXd xp = res.x;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double h = detail::fd_step(res.x[j], opts.fd_relative_step);
      xp[j] = res.x[j] + h;
      const Eigen::VectorXd rp = residual(xp);
      xp[j] = res.x[j] - h;
      const Eigen::VectorXd rm = residual(xp);
      xp[j] = res.x[j];
      jac.col(j) = (rp - rm) / (2.0 * h);
    }
    const Eigen::MatrixXd a = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 20; ++tries) {
      Eigen::MatrixXd damped = a;
      damped.diagonal().array() += mu * a.diagonal().array().max(1e-12);
      const Eigen::VectorXd step = damped.ldlt().solve(-g);
      const Eigen::VectorXd xn = res.x + step;
      const Eigen::VectorXd rn = step.allFinite() ? residual(xn) : Eigen::VectorXd();
      const double cn = rn.size() && rn.allFinite() ? rn.squaredNorm() : std::numeric_limits<double>::infinity();
      if (cn < res.cost) {
        const double gain = res.cost - cn;
        res.x = xn;
        r = rn;
        res.cost = cn;
        mu = std::max(mu / 3.0, 1e-15);
        improved = true;
        if (gain <= opts.tolerance * std::max(cn, 1e-300) && gain <= opts.tolerance) return res;
        break;
      }
      mu *= 4.0;
    }
    if (!improved) break;
  }
  return res;
}

}  // namespace qsid
