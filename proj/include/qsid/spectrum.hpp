#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "qsid/errors.hpp"
#include "qsid/simulator.hpp"

namespace qsid {

/// One-sided power spectrum summed over traces. power[j] sits at angular
/// frequency j * bin_width; bins strictly between 0 and Nyquist carry both
/// the positive and negative frequency halves, so that sum(power) equals
/// the summed time-domain mean square of the mean-removed traces.
struct Periodogram {
  std::vector<double> frequency;
  std::vector<double> power;
  double bin_width = 0.0;
};

/// Sample spacing of a uniform grid; throws if the grid is not uniform.
inline double uniform_spacing(const std::vector<double>& times) {
  if (times.size() < 2) throw InvalidArgument("need at least two samples");
  const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  for (std::size_t n = 1; n < times.size(); ++n)
    if (std::abs(times[n] - times[n - 1] - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
      throw InvalidArgument("time grid is not uniform");
  return dt;
}

inline Periodogram summed_periodogram(const TraceSet& traces) {
  const int nt = traces.num_times();
  const double dt = uniform_spacing(traces.times);
  const int half = nt / 2;
  Periodogram pg;
  pg.bin_width = 2.0 * std::numbers::pi / (nt * dt);
  pg.frequency.resize(static_cast<std::size_t>(half + 1));
  pg.power.assign(static_cast<std::size_t>(half + 1), 0.0);
  for (int j = 0; j <= half; ++j) pg.frequency[static_cast<std::size_t>(j)] = j * pg.bin_width;

  // DFT over the sample index, so the result does not depend on t_1.
  std::vector<double> cos_table(static_cast<std::size_t>(nt)), sin_table(static_cast<std::size_t>(nt));
  for (int r = 0; r < nt; ++r) {
    const double arg = 2.0 * std::numbers::pi * r / nt;
    cos_table[static_cast<std::size_t>(r)] = std::cos(arg);
    sin_table[static_cast<std::size_t>(r)] = std::sin(arg);
  }
  Eigen::VectorXd x(nt);
  for (int k = 0; k < traces.dim; ++k)
    for (int l = 0; l < traces.dim; ++l) {
      x = traces.trace(k, l);
      x.array() -= x.mean();
      for (int j = 0; j <= half; ++j) {
        double re = 0.0, im = 0.0;
        for (int n = 0; n < nt; ++n) {
          const auto r = static_cast<std::size_t>((static_cast<long long>(j) * n) % nt);
          re += x[n] * cos_table[r];
          im -= x[n] * sin_table[r];
        }
        const bool paired = j != 0 && !(nt % 2 == 0 && j == half);
        pg.power[static_cast<std::size_t>(j)] += (paired ? 2.0 : 1.0) * (re * re + im * im) / (double(nt) * nt);
      }
    }
  return pg;
}

}  // namespace qsid
