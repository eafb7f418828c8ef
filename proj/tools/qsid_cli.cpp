// Command-line front end: gen, simulate, estimate, reconstruct, bench,
// spectrum, tracefig.
//
// Exit codes: 0 success, 1 configuration or input error, 2 pipeline failure
// (for bench: some systems failed).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qsid/qsid.hpp"

namespace fs = std::filesystem;
using namespace qsid;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitFailure = 2;

// Writes to <out>/<name>, or to stdout when no directory was given.
void emit(const std::string& out, const std::string& name, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(out);
  write_file((fs::path(out) / name).string(), text);
  std::cerr << "wrote " << (fs::path(out) / name).string() << "\n";
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

BenchmarkConfig load_config(const std::string& path) {
  return path.empty() ? BenchmarkConfig{} : benchmark_config_from_json(read_json(path));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hamiltonian and dephasing identification from simulated population traces"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;

  // gen
  auto* gen = app.add_subcommand("gen", "emit a random system as JSON");
  int gen_dim = 3;
  double q_min = 12.0, q_max = 72.0;
  bool gen_general = false, gen_no_dephasing = false;
  gen->add_option("--seed", seed, "root seed")->each([&](const std::string&) { seed_given = true; });
  gen->add_option("--dim", gen_dim, "Hilbert-space dimension");
  gen->add_option("--q-min", q_min, "lower bound of the quality-factor range");
  gen->add_option("--q-max", q_max, "upper bound of the quality-factor range");
  gen->add_flag("--general", gen_general, "complex Hermitian instead of real symmetric");
  gen->add_flag("--no-dephasing", gen_no_dephasing, "drop the dephasing operator");
  gen->add_option("--out", out_dir, "output directory (default: stdout)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "synthesize traces for a system");
  std::string spec_path, strategy = "fixed:1000";
  sim->add_option("--spec", spec_path, "system JSON")->required();
  sim->add_option("--strategy", strategy, "inf | fixed:N | adaptive:C:CAP");
  sim->add_option("--seed", seed, "sampling seed")->each([&](const std::string&) { seed_given = true; });
  sim->add_option("--config", config_path, "benchmark config (time-grid settings)");
  sim->add_option("--out", out_dir, "output directory (default: stdout)");

  // estimate
  auto* est = app.add_subcommand("estimate", "estimate frequencies, rates and coefficients from traces");
  std::string traces_path, kind_name = "real_symmetric";
  int transitions = 3, restarts = 8;
  bool no_damping = false;
  est->add_option("--traces", traces_path, "trace CSV")->required();
  est->add_option("--transitions", transitions, "number of transitions M");
  est->add_option("--kind", kind_name, "real_symmetric | general");
  est->add_option("--restarts", restarts, "random rate initializations per seed");
  est->add_flag("--no-damping", no_damping, "fit with all rates fixed to zero");
  est->add_option("--seed", seed, "seed for the restarts")->each([&](const std::string&) { seed_given = true; });
  est->add_option("--out", out_dir, "output directory (default: stdout)");

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "rebuild the Hamiltonian from an estimation");
  std::string estimation_path, truth_path, gauge_name = "real_positive_offdiag";
  int runs = 8;
  double tol_bins = 2.5;
  rec->add_option("--estimation", estimation_path, "estimation JSON")->required();
  rec->add_option("--truth", truth_path, "true system JSON; adds error metrics");
  rec->add_option("--gauge", gauge_name, "real_positive_offdiag | phase_free");
  rec->add_option("--runs", runs, "overlap-fit runs");
  rec->add_option("--tolerance-bins", tol_bins, "sum-rule tolerance in periodogram bins");
  rec->add_option("--seed", seed, "seed for the fit runs")->each([&](const std::string&) { seed_given = true; });
  rec->add_option("--out", out_dir, "output directory (default: stdout)");

  // bench
  auto* bench = app.add_subcommand("bench", "run the benchmark and write the report");
  std::string arms_list;
  int n_systems = -1, jobs = -1;
  bench->add_option("--config", config_path, "benchmark config JSON");
  bench->add_option("--seed", seed, "root seed")->each([&](const std::string&) { seed_given = true; });
  bench->add_option("--out", out_dir, "output directory (default: bench_out)");
  bench->add_option("--arms", arms_list, "comma-separated arm names, e.g. N1000,N1000H");
  bench->add_option("--n-systems", n_systems, "number of random systems");
  bench->add_option("--jobs", jobs, "worker threads");

  // spectrum
  auto* spec_cmd = app.add_subcommand("spectrum", "export the summed periodogram of a trace CSV");
  spec_cmd->add_option("--traces", traces_path, "trace CSV")->required();
  spec_cmd->add_option("--out", out_dir, "output directory (default: stdout)");

  // tracefig
  auto* fig = app.add_subcommand("tracefig", "export ideal and sampled series of one trace");
  int fig_k = 0, fig_l = 0;
  fig->add_option("--spec", spec_path, "system JSON")->required();
  fig->add_option("--strategy", strategy, "inf | fixed:N | adaptive:C:CAP");
  fig->add_option("--seed", seed, "sampling seed")->each([&](const std::string&) { seed_given = true; });
  fig->add_option("-k", fig_k, "initial state");
  fig->add_option("-l", fig_l, "measured state");
  fig->add_option("--config", config_path, "benchmark config (time-grid settings)");
  fig->add_option("--out", out_dir, "output directory (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) {
      Philox rng = Philox::stream(seed, {stage::system, 0});
      SystemSpec s = generate_random_system(gen_dim, q_min, q_max, !gen_general, rng);
      if (gen_no_dephasing) s = without_dephasing(s);
      emit(out_dir, "spec.json", to_json(s).dump(2) + "\n");
      return 0;
    }
    if (*sim || *fig) {
      const std::string spec_text = read_file(spec_path);
      const SystemSpec s = system_spec_from_json(read_json(spec_path));
      const BenchmarkConfig cfg = load_config(config_path);
      SamplingPlan plan;
      plan.times = default_time_grid(s, cfg.time_grid);
      plan.strategy = SamplingStrategy::parse(strategy);
      plan.seed = seed;
      plan.validate();
      if (*sim) {
        const TraceSet traces = synthesize_traces(s, plan);
        emit(out_dir, "traces.csv", traces_to_csv(traces));
        if (!out_dir.empty())
          emit(out_dir, "traces.meta.json", trace_sidecar(plan, sha256_hex(spec_text)).dump(2) + "\n");
      } else {
        emit(out_dir, "tracefig.csv", export_trace_figure_data(s, plan, fig_k, fig_l));
      }
      return 0;
    }
    if (*spec_cmd) {
      emit(out_dir, "spectrum.csv", export_spectrum(traces_from_csv(read_file(traces_path))));
      return 0;
    }
    if (*est) {
      const TraceSet traces = traces_from_csv(read_file(traces_path));
      const BasisKind kind = basis_kind_from_string(kind_name);
      EstimatorOptions eo;
      eo.n_restarts = restarts;
      eo.fit_damping = !no_damping;
      Philox rng = Philox::stream(seed, {stage::estimation, 0});
      const auto seeds = seed_frequencies(traces, transitions);
      const EstimationResult r = maximize_posterior(traces, transitions, kind, seeds, eo, rng);
      const SignalCoefficients coeffs = extract_coefficients(r.params, kind, traces);
      nlohmann::json j = to_json(r, coeffs, traces.dim);
      j["bin_width"] = 2.0 * std::numbers::pi / (traces.num_times() * uniform_spacing(traces.times));
      j["n_times"] = traces.num_times();
      j["traces_sha256"] = sha256_file(traces_path);
      emit(out_dir, "estimation.json", j.dump(2) + "\n");
      return 0;
    }
    if (*rec) {
      const nlohmann::json j = read_json(estimation_path);
      int dim = 0;
      BasisKind kind{};
      TransitionParams params;
      double bin = 0.0;
      try {
        dim = j.at("dim").get<int>();
        kind = basis_kind_from_string(j.at("kind").get<std::string>());
        params.omega = vector_from_json(j.at("omega"));
        params.Gamma = vector_from_json(j.at("Gamma"));
        bin = j.at("bin_width").get<double>();
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("estimation: ") + e.what());
      }
      const SignalCoefficients coeffs = coefficients_from_json(j, dim);
      const GaugeConvention gauge = gauge_convention_from_string(gauge_name);
      const LevelStructure ls = infer_level_structure(params.omega, tol_bins * bin);
      OverlapFitOptions fo;
      fo.n_runs = runs;
      Philox rng = Philox::stream(seed, {stage::overlaps, 0});
      const ProjectorSet ps = fit_overlaps(coeffs, ls, kind, fo, rng);
      ReconstructionResult r = assemble_hamiltonian(ls, ps, gauge);
      if (!truth_path.empty()) {
        const SystemSpec truth = system_spec_from_json(read_json(truth_path));
        r.metrics = compute_error_metrics(truth, params, coeffs, kind, r);
      }
      nlohmann::json out = to_json(r);
      if (truth_path.empty()) out.erase("metrics");
      emit(out_dir, "reconstruction.json", out.dump(2) + "\n");
      if (!r.gauge.fixable) std::cerr << "warning: gauge convention could not be met exactly\n";
      return 0;
    }
    if (*bench) {
      BenchmarkConfig cfg = load_config(config_path);
      if (seed_given) cfg.seed = seed;
      if (n_systems > 0) cfg.n_systems = n_systems;
      if (jobs > 0) cfg.jobs = jobs;
      if (!arms_list.empty()) {
        std::vector<ArmSpec> chosen;
        for (const auto& name : split(arms_list, ',')) {
          const auto pool = standard_arms();
          auto hit = std::find_if(cfg.arms.begin(), cfg.arms.end(), [&](const ArmSpec& a) { return a.name == name; });
          if (hit != cfg.arms.end()) {
            chosen.push_back(*hit);
            continue;
          }
          auto std_hit = std::find_if(pool.begin(), pool.end(), [&](const ArmSpec& a) { return a.name == name; });
          if (std_hit == pool.end()) throw ParseError("unknown arm: " + name);
          chosen.push_back(*std_hit);
        }
        cfg.arms = chosen;
      }
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      if (cfg.output_dir.empty()) cfg.output_dir = "bench_out";
      cfg.validate();
      const BenchmarkReport report = run_benchmark(cfg);
      write_report(report, cfg.output_dir);
      std::cout << emit_table(report).text;
      for (const auto& a : report.arms)
        for (const auto& [reason, count] : a.failures)
          std::cerr << a.arm.name << ": " << count << " x " << reason << "\n";
      return report.failures() > 0 ? kExitFailure : 0;
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
