#pragma once

// Benchmark driver: random systems x sampling arms -> estimation ->
// reconstruction -> metrics, median tables, and plot-data exports.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "qsid/core_model.hpp"
#include "qsid/errors.hpp"
#include "qsid/estimator.hpp"
#include "qsid/provenance.hpp"
#include "qsid/random.hpp"
#include "qsid/reconstructor.hpp"
#include "qsid/simulator.hpp"
#include "qsid/spectrum.hpp"

namespace qsid {

struct ArmSpec {
  std::string name;
  SamplingStrategy strategy;
  bool with_dephasing = true;
};

/// The six columns of the standard table, in display order.
inline std::vector<ArmSpec> standard_arms() {
  return {{"Ninf", SamplingStrategy::infinite(), true},
          {"NinfH", SamplingStrategy::infinite(), false},
          {"N1000", SamplingStrategy::fixed(1000), true},
          {"N1000H", SamplingStrategy::fixed(1000), false},
          {"Nvar", SamplingStrategy::adaptive(10.0, 10000), true},
          {"NvarH", SamplingStrategy::adaptive(10.0, 10000), false}};
}

struct BenchmarkConfig {
  int n_systems = 20;
  int dim = 3;
  double q_min = 12.0;
  double q_max = 72.0;
  bool real_symmetric = true;
  std::vector<ArmSpec> arms = standard_arms();
  TimeGridOptions time_grid{};
  GeneratorOptions generator{};
  std::uint64_t seed = 20240601;
  int n_restarts = 8;
  int n_overlap_runs = 8;
  double structure_tolerance_bins = 2.5;  ///< 5 x half a periodogram bin
  GaugeConvention gauge = GaugeConvention::RealPositiveOffdiag;
  std::string output_dir;                 ///< empty: nothing is written
  int jobs = 1;

  void validate() const {
    if (n_systems < 1) throw InvalidArgument("n_systems must be >= 1");
    if (dim != 3) throw InvalidArgument("the benchmark reconstructs qutrits only (dim = 3)");
    if (!(q_min > 0.0) || !(q_min <= q_max)) throw InvalidArgument("need 0 < q_min <= q_max");
    if (arms.empty()) throw InvalidArgument("no arms selected");
    for (std::size_t i = 0; i < arms.size(); ++i) {
      if (arms[i].name.empty()) throw InvalidArgument("arm without a name");
      arms[i].strategy.validate();
      for (std::size_t j = 0; j < i; ++j)
        if (arms[j].name == arms[i].name) throw InvalidArgument("duplicate arm " + arms[i].name);
    }
    if (n_restarts < 1 || n_overlap_runs < 1) throw InvalidArgument("restart counts must be >= 1");
    if (!(structure_tolerance_bins > 0.0)) throw InvalidArgument("structure tolerance must be positive");
    if (jobs < 1) throw InvalidArgument("jobs must be >= 1");
  }
};

inline nlohmann::json to_json(const BenchmarkConfig& c) {
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& a : c.arms)
    arms.push_back({{"name", a.name}, {"strategy", a.strategy.label()}, {"with_dephasing", a.with_dephasing}});
  return {{"n_systems", c.n_systems},
          {"dim", c.dim},
          {"q_range", {c.q_min, c.q_max}},
          {"real_symmetric", c.real_symmetric},
          {"arms", arms},
          {"time_grid",
           {{"n_times", c.time_grid.n_times},
            {"oversampling", c.time_grid.oversampling},
            {"decay_multiple", c.time_grid.decay_multiple},
            {"min_times", c.time_grid.min_times}}},
          {"generator",
           {{"gap_min", c.generator.gap_min},
            {"gap_max", c.generator.gap_max},
            {"min_relative_separation", c.generator.min_relative_separation},
            {"positive_offdiagonal", c.generator.positive_offdiagonal}}},
          {"seed", c.seed},
          {"rng", Philox::name},
          {"n_restarts", c.n_restarts},
          {"n_overlap_runs", c.n_overlap_runs},
          {"structure_tolerance_bins", c.structure_tolerance_bins},
          {"gauge", to_string(c.gauge)}};
}

/// Parses a config; absent keys keep their defaults, unknown keys are errors.
/// Arms may be given by standard name ("N1000") or as full objects.
inline BenchmarkConfig benchmark_config_from_json(const nlohmann::json& j) {
  BenchmarkConfig c;
  static const std::vector<std::string> known = {
      "n_systems", "dim",  "q_range",        "real_symmetric", "arms",  "time_grid", "generator",
      "seed",      "rng",  "n_restarts",     "n_overlap_runs", "structure_tolerance_bins",
      "gauge",     "jobs", "output_dir"};
  try {
    if (!j.is_object()) throw ParseError("config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (std::find(known.begin(), known.end(), it.key()) == known.end())
        throw ParseError("unknown config key: " + it.key());
    if (j.contains("n_systems")) c.n_systems = j["n_systems"].get<int>();
    if (j.contains("dim")) c.dim = j["dim"].get<int>();
    if (j.contains("q_range")) {
      const auto& q = j["q_range"];
      if (q.size() != 2) throw ParseError("q_range needs two entries");
      c.q_min = q[0].get<double>();
      c.q_max = q[1].get<double>();
    }
    if (j.contains("real_symmetric")) c.real_symmetric = j["real_symmetric"].get<bool>();
    if (j.contains("arms")) {
      c.arms.clear();
      const auto standard = standard_arms();
      for (const auto& a : j["arms"]) {
        if (a.is_string()) {
          const auto name = a.get<std::string>();
          const auto hit = std::find_if(standard.begin(), standard.end(), [&](const ArmSpec& s) { return s.name == name; });
          if (hit == standard.end()) throw ParseError("unknown arm: " + name);
          c.arms.push_back(*hit);
        } else {
          c.arms.push_back({a.at("name").get<std::string>(),
                            SamplingStrategy::parse(a.at("strategy").get<std::string>()),
                            a.value("with_dephasing", true)});
        }
      }
    }
    if (j.contains("time_grid")) {
      const auto& t = j["time_grid"];
      c.time_grid.n_times = t.value("n_times", c.time_grid.n_times);
      c.time_grid.oversampling = t.value("oversampling", c.time_grid.oversampling);
      c.time_grid.decay_multiple = t.value("decay_multiple", c.time_grid.decay_multiple);
      c.time_grid.min_times = t.value("min_times", c.time_grid.min_times);
    }
    if (j.contains("generator")) {
      const auto& g = j["generator"];
      c.generator.gap_min = g.value("gap_min", c.generator.gap_min);
      c.generator.gap_max = g.value("gap_max", c.generator.gap_max);
      c.generator.min_relative_separation = g.value("min_relative_separation", c.generator.min_relative_separation);
      c.generator.positive_offdiagonal = g.value("positive_offdiagonal", c.generator.positive_offdiagonal);
    }
    if (j.contains("rng") && j["rng"].get<std::string>() != Philox::name)
      throw ParseError("unsupported rng: " + j["rng"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("n_restarts")) c.n_restarts = j["n_restarts"].get<int>();
    if (j.contains("n_overlap_runs")) c.n_overlap_runs = j["n_overlap_runs"].get<int>();
    if (j.contains("structure_tolerance_bins")) c.structure_tolerance_bins = j["structure_tolerance_bins"].get<double>();
    if (j.contains("gauge")) c.gauge = gauge_convention_from_string(j["gauge"].get<std::string>());
    if (j.contains("jobs")) c.jobs = j["jobs"].get<int>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline std::string config_sha256(const BenchmarkConfig& c) { return sha256_hex(to_json(c).dump()); }

// ---------------------------------------------------------------------------
// Streams

namespace stage {
inline constexpr std::uint64_t system = 1;
inline constexpr std::uint64_t sampling = 2;
inline constexpr std::uint64_t estimation = 3;
inline constexpr std::uint64_t overlaps = 4;
}  // namespace stage

/// Stable tag for an arm, independent of which other arms are selected.
inline std::uint64_t arm_tag(const std::string& name) {
  const std::string h = sha256_hex(name);
  return std::stoull(h.substr(0, 16), nullptr, 16);
}

/// Ground truth for system i; shared by every arm.
inline SystemSpec benchmark_system(const BenchmarkConfig& c, int index) {
  Philox rng = Philox::stream(c.seed, {stage::system, static_cast<std::uint64_t>(index)});
  return generate_random_system(c.dim, c.q_min, c.q_max, c.real_symmetric, rng, c.generator);
}

// ---------------------------------------------------------------------------
// One pipeline run

struct SystemRecord {
  int system = 0;
  std::string arm;
  std::string spec_sha256;
  std::uint64_t plan_seed = 0;
  int n_times = 0;
  bool ok = false;
  std::string reason;   ///< error code on failure
  std::string message;
  double logp = std::numeric_limits<double>::quiet_NaN();
  ErrorMetrics metrics{};
  bool gauge_fixable = true;
  bool reflected = false;
  double seconds = 0.0;  ///< wall time; kept out of the report for byte-stable output
};

struct PipelineArtifacts {
  SystemSpec spec;
  SamplingPlan plan;
  TraceSet traces;
  EstimationResult estimation;
  SignalCoefficients coefficients;
  ReconstructionResult reconstruction;
  bool have_estimation = false;
  bool have_reconstruction = false;
};

/// Runs the full pipeline for one (system, arm). `truth` is the shared
/// ground truth; Hamiltonian-only arms drop its dephasing operator.
inline SystemRecord run_pipeline(const BenchmarkConfig& c, int index, const ArmSpec& arm, const SystemSpec& truth,
                                 PipelineArtifacts* keep = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  SystemRecord rec;
  rec.system = index;
  rec.arm = arm.name;
  PipelineArtifacts local;
  PipelineArtifacts& art = keep ? *keep : local;
  try {
    art.spec = arm.with_dephasing ? truth : without_dephasing(truth);
    rec.spec_sha256 = sha256_hex(to_json(art.spec).dump());
    const std::uint64_t tag = arm_tag(arm.name);
    const auto ui = static_cast<std::uint64_t>(index);
    art.plan.times = default_time_grid(art.spec, c.time_grid);
    art.plan.strategy = arm.strategy;
    art.plan.seed = Philox::stream(c.seed, {stage::sampling, ui, tag})();
    rec.plan_seed = art.plan.seed;
    rec.n_times = static_cast<int>(art.plan.times.size());
    art.traces = synthesize_traces(art.spec, art.plan);

    const int transitions = c.dim * (c.dim - 1) / 2;
    const BasisKind kind = c.real_symmetric ? BasisKind::RealSymmetric : BasisKind::General;
    EstimatorOptions eo;
    eo.n_restarts = c.n_restarts;
    eo.fit_damping = arm.with_dephasing;
    Philox est_rng = Philox::stream(c.seed, {stage::estimation, ui, tag});
    const auto seeds = seed_frequencies(art.traces, transitions);
    art.estimation = maximize_posterior(art.traces, transitions, kind, seeds, eo, est_rng);
    art.coefficients = extract_coefficients(art.estimation.params, kind, art.traces);
    art.have_estimation = true;
    rec.logp = art.estimation.posterior.logp;

    const double bin = 2.0 * std::numbers::pi / (art.traces.num_times() * uniform_spacing(art.traces.times));
    const LevelStructure ls = infer_level_structure(art.estimation.params.omega, c.structure_tolerance_bins * bin);
    OverlapFitOptions fo;
    fo.n_runs = c.n_overlap_runs;
    Philox fit_rng = Philox::stream(c.seed, {stage::overlaps, ui, tag});
    const ProjectorSet ps = fit_overlaps(art.coefficients, ls, kind, fo, fit_rng);
    art.reconstruction = assemble_hamiltonian(ls, ps, c.gauge);
    art.reconstruction.metrics =
        compute_error_metrics(art.spec, art.estimation.params, art.coefficients, kind, art.reconstruction);
    art.have_reconstruction = true;
    rec.metrics = art.reconstruction.metrics;
    // Hamiltonian-only arms have no rates to score.
    if (!arm.with_dephasing) rec.metrics.eps_Gamma = std::numeric_limits<double>::quiet_NaN();
    rec.gauge_fixable = art.reconstruction.gauge.fixable;
    rec.reflected = art.reconstruction.gauge.reflected;
    rec.ok = true;
  } catch (const Error& e) {
    rec.ok = false;
    rec.reason = e.code();
    rec.message = e.what();
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

// ---------------------------------------------------------------------------
// Aggregation

inline double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct ArmSummary {
  ArmSpec arm;
  int n_ok = 0;
  int n_failed = 0;
  std::map<std::string, int> failures;  ///< reason code -> count
  double L = std::numeric_limits<double>::quiet_NaN();
  ErrorMetrics medians{};
};

struct BenchmarkReport {
  BenchmarkConfig config;
  std::string config_sha256;
  std::vector<SystemRecord> records;  ///< ordered by (system, arm order)
  std::vector<ArmSummary> arms;

  int failures() const {
    int n = 0;
    for (const auto& a : arms) n += a.n_failed;
    return n;
  }
};

inline ArmSummary summarize_arm(const ArmSpec& arm, const std::vector<SystemRecord>& records) {
  ArmSummary s;
  s.arm = arm;
  std::vector<double> L, w, g, a, S, H;
  for (const auto& r : records) {
    if (r.arm != arm.name) continue;
    if (!r.ok) {
      ++s.n_failed;
      ++s.failures[r.reason];
      continue;
    }
    ++s.n_ok;
    L.push_back(r.logp);
    w.push_back(r.metrics.eps_omega);
    g.push_back(r.metrics.eps_Gamma);
    a.push_back(r.metrics.eps_a);
    S.push_back(r.metrics.eps_S);
    H.push_back(r.metrics.eps_H);
  }
  s.L = median(L);
  s.medians = {median(w), arm.with_dephasing ? median(g) : std::numeric_limits<double>::quiet_NaN(), median(a),
               median(S), median(H)};
  return s;
}

/// Runs every (system, arm) pair on a pool of `config.jobs` threads. Results
/// do not depend on the thread count. Artifacts are written when
/// output_dir is set.
inline BenchmarkReport run_benchmark(const BenchmarkConfig& config) {
  config.validate();
  BenchmarkReport report;
  report.config = config;
  report.config_sha256 = config_sha256(config);
  const int n_arms = static_cast<int>(config.arms.size());
  const int tasks = config.n_systems * n_arms;
  report.records.resize(static_cast<std::size_t>(tasks));

  namespace fs = std::filesystem;
  const bool persist = !config.output_dir.empty();
  if (persist) fs::create_directories(fs::path(config.output_dir) / "systems");

  std::vector<SystemSpec> truths(static_cast<std::size_t>(config.n_systems));
  for (int i = 0; i < config.n_systems; ++i) truths[static_cast<std::size_t>(i)] = benchmark_system(config, i);

  std::atomic<int> next{0};
  std::mutex io;
  auto worker = [&] {
    for (int t = next++; t < tasks; t = next++) {
      const int i = t / n_arms;
      const ArmSpec& arm = config.arms[static_cast<std::size_t>(t % n_arms)];
      PipelineArtifacts art;
      report.records[static_cast<std::size_t>(t)] =
          run_pipeline(config, i, arm, truths[static_cast<std::size_t>(i)], persist ? &art : nullptr);
      if (!persist) continue;
      char name[32];
      std::snprintf(name, sizeof name, "sys_%04d", i);
      const fs::path dir = fs::path(config.output_dir) / "systems" / name / arm.name;
      std::lock_guard<std::mutex> lock(io);
      fs::create_directories(dir);
      const std::string spec_text = to_json(art.spec).dump(2);
      write_file((dir / "spec.json").string(), spec_text);
      if (!art.traces.times.empty()) {
        write_file((dir / "traces.csv").string(), traces_to_csv(art.traces));
        write_file((dir / "traces.meta.json").string(), trace_sidecar(art.plan, sha256_hex(spec_text)).dump(2));
      }
      if (art.have_estimation)
        write_file((dir / "estimation.json").string(),
                   to_json(art.estimation, art.coefficients, art.spec.dim).dump(2));
      if (art.have_reconstruction)
        write_file((dir / "reconstruction.json").string(), to_json(art.reconstruction).dump(2));
    }
  };
  const int threads = std::min(config.jobs, tasks);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& arm : config.arms) report.arms.push_back(summarize_arm(arm, report.records));
  return report;
}

// ---------------------------------------------------------------------------
// Output

/// Two significant digits, exponent without '+', e.g. 5.9e04, 1.8e-07.
inline std::string format_sci(double x) {
  if (!std::isfinite(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1e", x);
  std::string s(buf);
  const auto p = s.find("e+");
  if (p != std::string::npos) s.erase(p + 1, 1);
  return s;
}

inline std::string format_exact(double x) {
  if (!std::isfinite(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline nlohmann::json json_number(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

inline nlohmann::json to_json(const SystemRecord& r) {
  nlohmann::json j = {{"system", r.system},   {"arm", r.arm},         {"spec_sha256", r.spec_sha256},
                      {"plan_seed", r.plan_seed}, {"n_times", r.n_times}, {"ok", r.ok}};
  if (r.ok) {
    j["logp"] = r.logp;
    j["metrics"] = {{"eps_omega", json_number(r.metrics.eps_omega)},
                    {"eps_Gamma", json_number(r.metrics.eps_Gamma)},
                    {"eps_a", json_number(r.metrics.eps_a)},
                    {"eps_S", json_number(r.metrics.eps_S)},
                    {"eps_H", json_number(r.metrics.eps_H)}};
    j["gauge_fixable"] = r.gauge_fixable;
    j["reflected"] = r.reflected;
  } else {
    j["reason"] = r.reason;
    j["message"] = r.message;
  }
  return j;
}

inline nlohmann::json to_json(const BenchmarkReport& rep) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : rep.records) {
    nlohmann::json j = to_json(r);
    j["config_sha256"] = rep.config_sha256;
    j["seed"] = rep.config.seed;
    records.push_back(j);
  }
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& a : rep.arms)
    arms.push_back({{"name", a.arm.name},
                    {"strategy", a.arm.strategy.label()},
                    {"with_dephasing", a.arm.with_dephasing},
                    {"n_ok", a.n_ok},
                    {"n_failed", a.n_failed},
                    {"failures", a.failures},
                    {"medians",
                     {{"L", json_number(a.L)},
                      {"eps_omega", json_number(a.medians.eps_omega)},
                      {"eps_Gamma", json_number(a.medians.eps_Gamma)},
                      {"eps_a", json_number(a.medians.eps_a)},
                      {"eps_S", json_number(a.medians.eps_S)},
                      {"eps_H", json_number(a.medians.eps_H)}}}});
  return {{"config", to_json(rep.config)}, {"config_sha256", rep.config_sha256}, {"arms", arms}, {"records", records}};
}

namespace detail {

inline const std::vector<std::pair<std::string, double ErrorMetrics::*>>& metric_rows() {
  static const std::vector<std::pair<std::string, double ErrorMetrics::*>> rows = {
      {"eps_omega", &ErrorMetrics::eps_omega}, {"eps_Gamma", &ErrorMetrics::eps_Gamma},
      {"eps_a", &ErrorMetrics::eps_a},         {"eps_S", &ErrorMetrics::eps_S},
      {"eps_H", &ErrorMetrics::eps_H}};
  return rows;
}

}  // namespace detail

struct Table {
  std::string text;
  std::string csv;
};

/// Median table: one column per arm present, rows L then the five errors.
/// Text uses two significant digits; the CSV keeps full precision.
inline Table emit_table(const BenchmarkReport& rep) {
  if (rep.arms.empty()) throw InvalidArgument("empty report");
  Table t;
  std::ostringstream txt, csv;
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  txt << pad("", 10);
  csv << "metric";
  for (const auto& a : rep.arms) {
    txt << pad(a.arm.name, 10);
    csv << ',' << a.arm.name;
  }
  txt << '\n';
  csv << '\n';
  txt << pad("L", 10);
  csv << "L";
  for (const auto& a : rep.arms) {
    txt << pad(format_sci(a.L), 10);
    csv << ',' << format_exact(a.L);
  }
  txt << '\n';
  csv << '\n';
  for (const auto& [name, field] : detail::metric_rows()) {
    txt << pad(name, 10);
    csv << name;
    for (const auto& a : rep.arms) {
      txt << pad(format_sci(a.medians.*field), 10);
      csv << ',' << format_exact(a.medians.*field);
    }
    txt << '\n';
    csv << '\n';
  }
  txt << pad("ok/failed", 10);
  for (const auto& a : rep.arms) txt << pad(std::to_string(a.n_ok) + "/" + std::to_string(a.n_failed), 10);
  txt << '\n';
  t.text = txt.str();
  t.csv = csv.str();
  return t;
}

/// Per-system records as CSV (full precision; blank for missing values).
inline std::string records_to_csv(const BenchmarkReport& rep) {
  std::ostringstream out;
  out << "system,arm,ok,reason,spec_sha256,plan_seed,n_times,logp,eps_omega,eps_Gamma,eps_a,eps_S,eps_H\n";
  for (const auto& r : rep.records) {
    out << r.system << ',' << r.arm << ',' << (r.ok ? 1 : 0) << ',' << r.reason << ',' << r.spec_sha256 << ','
        << r.plan_seed << ',' << r.n_times << ',';
    if (r.ok) {
      out << format_exact(r.logp);
      for (const auto& row : detail::metric_rows()) out << ',' << format_exact(r.metrics.*(row.second));
    } else {
      out << ",,,,,";
    }
    out << '\n';
  }
  return out.str();
}

inline std::string timings_to_csv(const BenchmarkReport& rep) {
  std::ostringstream out;
  out << "system,arm,seconds\n";
  for (const auto& r : rep.records) out << r.system << ',' << r.arm << ',' << format_exact(r.seconds) << '\n';
  return out.str();
}

/// Writes report.json, table.txt, table.csv, systems.csv and timings.csv.
inline void write_report(const BenchmarkReport& rep, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const Table t = emit_table(rep);
  write_file((fs::path(dir) / "report.json").string(), to_json(rep).dump(2) + "\n");
  write_file((fs::path(dir) / "table.txt").string(), t.text);
  write_file((fs::path(dir) / "table.csv").string(), t.csv);
  write_file((fs::path(dir) / "systems.csv").string(), records_to_csv(rep));
  write_file((fs::path(dir) / "timings.csv").string(), timings_to_csv(rep));
}

// ---------------------------------------------------------------------------
// Plot data

/// The summed periodogram that seed_frequencies works from.
inline std::string export_spectrum(const TraceSet& traces) {
  const Periodogram pg = summed_periodogram(traces);
  std::ostringstream out;
  out << "frequency,power\n";
  for (std::size_t j = 0; j < pg.power.size(); ++j)
    out << format_exact(pg.frequency[j]) << ',' << format_exact(pg.power[j]) << '\n';
  return out.str();
}

/// Ideal and sampled series of trace (k, l) on the plan's grid.
inline std::string export_trace_figure_data(const SystemSpec& spec, const SamplingPlan& plan, int k, int l) {
  if (k < 0 || l < 0 || k >= spec.dim || l >= spec.dim) throw InvalidArgument("trace index out of range");
  const TraceSet sampled = synthesize_traces(spec, plan);
  const ProbabilityModel model(spec);
  std::ostringstream out;
  out << "t,ideal,sampled\n";
  for (int n = 0; n < sampled.num_times(); ++n) {
    const double t = plan.times[static_cast<std::size_t>(n)];
    out << format_exact(t) << ',' << format_exact(model.probability(k, l, t)) << ','
        << format_exact(sampled.at(k, l, n)) << '\n';
  }
  return out.str();
}

}  // namespace qsid
