// Command-line front end: simulate, fuse, run, evaluate, calibrate-check,
// bench, baseline and compare.
//
// Exit codes: 0 success, 1 invalid input or a failed check, 2 runtime error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mfrpinp/error.hpp"
#include "mfrpinp/eval/config.hpp"
#include "mfrpinp/eval/metrics.hpp"
#include "mfrpinp/eval/pipeline.hpp"
#include "mfrpinp/io/csv.hpp"

namespace fs = std::filesystem;
using namespace mfrpinp;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;

struct CheckFailed : Error {
  using Error::Error;
};

struct Common {
  std::string config;
  std::vector<std::string> sets;

  eval::RunConfig load() const {
    eval::RunConfig c;
    if (!config.empty()) c.apply_file(config);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      c.set(s.substr(0, eq), s.substr(eq + 1));
    }
    c.validate();
    return c;
  }
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "config file of section.key = value lines")
      ->check(CLI::ExistingFile);
  sub->add_option("-s,--set", c.sets, "override one key, e.g. --set loop.iterations=500");
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

std::vector<physics::RobotState> read_labels(const std::string& path) {
  return ukf::read_fused(path).states;
}

std::vector<std::string> argv_vector(int argc, char** argv) {
  return {argv, argv + argc};
}

void print_report(const eval::MetricsReport& r) {
  std::cout << std::setprecision(6) << "samples " << r.samples << " (skipped " << r.skipped
            << ")\nrmse " << r.rmse << "\nnll " << r.nll << "\nnll_raw " << r.nll_raw
            << "\ncoverage";
  for (double c : r.coverage) std::cout << ' ' << c;
  std::cout << '\n';
  if (r.has_latency)
    std::cout << "latency_ms p50 " << r.latency.p50 << " p95 " << r.latency.p95 << " p99 "
              << r.latency.p99 << '\n';
}

std::vector<double> read_timing(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  io::CsvReader r(in);
  const std::size_t col = r.column("latency_ms");
  std::vector<double> ms;
  while (r.next()) ms.push_back(r.number(col));
  return ms;
}

// Config hash of the run that produced `predictions`, when its manifest sits beside it.
std::string run_config_hash(const fs::path& predictions) {
  const fs::path manifest = predictions.parent_path() / "manifest.json";
  if (!fs::exists(manifest)) return "";
  std::ifstream in(manifest);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto key = text.find("\"config_hash\": \"");
  if (key == std::string::npos) return "";
  const auto begin = key + 16;
  return text.substr(begin, text.find('"', begin) - begin);
}

void histogram(const std::vector<double>& ms) {
  const double edges[] = {0.25, 0.5, 1, 2, 5, 10, 20};
  std::size_t counts[8] = {};
  for (double v : ms) {
    std::size_t b = 0;
    while (b < 7 && v >= edges[b]) ++b;
    ++counts[b];
  }
  double lo = 0.0;
  for (std::size_t b = 0; b < 8; ++b) {
    std::ostringstream label;
    label << '[' << lo << ", ";
    if (b < 7) label << edges[b] << ") ms";
    else label << "inf) ms";
    std::cout << std::left << std::setw(16) << label.str() << std::right << std::setw(8)
              << counts[b] << '\n';
    if (b < 7) lo = edges[b];
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online multi-fidelity state prediction with calibrated uncertainty"};
  app.require_subcommand(1);
  const std::vector<std::string> command = argv_vector(argc, argv);

  Common sim_c, fuse_c, run_c, bench_c, base_c;

  auto* simulate = app.add_subcommand("simulate", "simulate a scenario and write its dataset CSV");
  add_common(simulate, sim_c);
  std::string sim_out = "dataset.csv";
  simulate->add_option("-o,--out", sim_out, "dataset CSV");

  auto* fuse = app.add_subcommand("fuse", "run the filter on a dataset and write labels");
  add_common(fuse, fuse_c);
  std::string fuse_in, fuse_out = "labels.csv";
  fuse->add_option("-d,--dataset", fuse_in, "dataset CSV")->required()->check(CLI::ExistingFile);
  fuse->add_option("-o,--out", fuse_out, "labels CSV");

  auto* run = app.add_subcommand("run", "run the online loop on a dataset");
  add_common(run, run_c);
  std::string run_in, run_labels, run_out;
  run->add_option("-d,--dataset", run_in, "dataset CSV")->required()->check(CLI::ExistingFile);
  run->add_option("-l,--labels", run_labels, "labels CSV (default: run the filter)")
      ->check(CLI::ExistingFile);
  run->add_option("-o,--out", run_out, "artifact directory (default: run.output)");

  auto* evaluate = app.add_subcommand("evaluate", "score a predictions log against labels");
  std::string ev_pred, ev_labels, ev_timing, ev_out;
  double ev_tail = 1.0;
  evaluate->add_option("-p,--predictions", ev_pred, "predictions CSV")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("-l,--labels", ev_labels, "labels CSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("-t,--timing", ev_timing, "timing CSV for latency percentiles")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--tail", ev_tail, "score only the last fraction of rows")
      ->check(CLI::Range(1e-9, 1.0));
  evaluate->add_option("-o,--out", ev_out, "report JSON");

  auto* calib = app.add_subcommand("calibrate-check", "split-conformal coverage study");
  double cc_alpha = 0.1, cc_lo = 0.87, cc_hi = 0.95;
  std::size_t cc_trials = 10, cc_cal = 500, cc_test = 500, cc_need = 9;
  std::uint64_t cc_seed = 0;
  calib->add_option("--alpha", cc_alpha, "miscoverage level")->check(CLI::Range(0.0, 1.0));
  calib->add_option("--trials", cc_trials, "seeded trials");
  calib->add_option("--n-cal", cc_cal, "calibration points per trial");
  calib->add_option("--n-test", cc_test, "test points per trial");
  calib->add_option("--seed", cc_seed, "first trial seed");
  calib->add_option("--lo", cc_lo, "lower coverage bound");
  calib->add_option("--hi", cc_hi, "upper coverage bound");
  calib->add_option("--need", cc_need, "trials that must land inside the bounds");

  auto* bench = app.add_subcommand("bench", "latency histogram of infer_step");
  add_common(bench, bench_c);
  std::size_t bench_n = 2000;
  double bench_budget = 20.0;
  std::string bench_out;
  bench->add_option("-n,--iterations", bench_n, "timed calls")->check(CLI::PositiveNumber);
  bench->add_option("--budget-ms", bench_budget, "p99 budget");
  bench->add_option("-o,--out", bench_out, "timing CSV of every call");

  auto* baseline = app.add_subcommand("baseline", "dead-reckoning predictions for comparison");
  add_common(baseline, base_c);
  std::string base_in, base_labels, base_out = "baseline.csv";
  baseline->add_option("-d,--dataset", base_in, "dataset CSV")->required()->check(CLI::ExistingFile);
  baseline->add_option("-l,--labels", base_labels, "labels CSV (default: run the filter)")
      ->check(CLI::ExistingFile);
  baseline->add_option("-o,--out", base_out, "predictions CSV");

  auto* cmp = app.add_subcommand("compare", "side-by-side metrics of two reports");
  std::string cmp_a, cmp_b, cmp_out;
  cmp->add_option("a", cmp_a, "report JSON")->required()->check(CLI::ExistingFile);
  cmp->add_option("b", cmp_b, "report JSON")->required()->check(CLI::ExistingFile);
  cmp->add_option("-o,--out", cmp_out, "comparison CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*simulate) {
      const eval::RunConfig c = sim_c.load();
      const sim::Dataset d = eval::simulate_dataset(c);
      auto out = open_out(sim_out);
      sim::record(d, out);
      std::cout << "wrote " << d.size() << " frames to " << sim_out << '\n';
    } else if (*fuse) {
      const eval::RunConfig c = fuse_c.load();
      const sim::Dataset d = sim::load(fuse_in);
      const ukf::FusionResult r = ukf::run_fusion(d.sensors, c.physics, c.filter());
      auto out = open_out(fuse_out);
      ukf::write_fused(r, out);
      std::cout << "wrote " << r.states.size() << " labels to " << fuse_out << '\n';
    } else if (*run) {
      const eval::RunConfig c = run_c.load();
      const sim::Dataset d = sim::load(run_in);
      std::optional<std::vector<physics::RobotState>> labels;
      std::map<std::string, std::string> inputs{{"dataset", eval::sha256_file(run_in)}};
      if (!run_labels.empty()) {
        labels = read_labels(run_labels);
        inputs["labels"] = eval::sha256_file(run_labels);
      }
      const fs::path dir = run_out.empty() ? fs::path(c.output) : fs::path(run_out);
      const learn::Scenario s = eval::scenario_for(c, d.sensors, labels);
      const learn::RunResult r = eval::run_experiment(c, s, dir, inputs, command);
      std::cout << "predictions " << r.predictions.size() << ", training phases "
                << r.losses.size() << ", syncs " << r.syncs << ", skipped " << r.skipped
                << "\nartifacts in " << dir.string() << '\n';
      for (const auto& e : r.errors) std::cerr << "skipped iteration: " << e << '\n';
    } else if (*evaluate) {
      std::ifstream in(ev_pred);
      const learn::PredictionLog log = learn::read_predictions(in);
      const ukf::FusionResult labels = ukf::read_fused(ev_labels);
      eval::MetricsReport r = eval::evaluate(log, labels.t, labels.states, ev_tail);
      if (!ev_timing.empty()) {
        r.has_latency = true;
        r.latency = eval::latency_summary(read_timing(ev_timing));
      }
      r.dataset_hash = eval::sha256_file(ev_labels);
      r.config_hash = run_config_hash(ev_pred);
      print_report(r);
      if (!ev_out.empty()) {
        auto out = open_out(ev_out);
        out << r.to_json();
      }
    } else if (*calib) {
      const auto cov = eval::coverage_trials(cc_alpha, cc_trials, cc_cal, cc_test, cc_seed);
      std::size_t inside = 0;
      for (std::size_t t = 0; t < cov.size(); ++t) {
        const bool ok = cov[t] >= cc_lo && cov[t] <= cc_hi;
        inside += ok;
        std::cout << "trial " << t << " coverage " << std::setprecision(4) << cov[t]
                  << (ok ? "" : "  outside") << '\n';
      }
      std::cout << inside << " of " << cov.size() << " trials in [" << cc_lo << ", " << cc_hi
                << "]\n";
      if (inside < cc_need)
        throw CheckFailed("only " + std::to_string(inside) + " trials inside, need " +
                          std::to_string(cc_need));
    } else if (*bench) {
      const eval::RunConfig c = bench_c.load();
      eval::RunConfig short_run = c;
      short_run.scenario = "figure-eight";
      short_run.cycles = 1;
      const sim::Dataset d = eval::simulate_dataset(short_run);
      const learn::Scenario s = eval::scenario_for(c, d.sensors, std::nullopt);
      const np::MfrPinpModel model(c.loop.model);
      eval::infer_latencies(model, s, c.physics, 100);  // warm caches
      const std::vector<double> ms = eval::infer_latencies(model, s, c.physics, bench_n);
      histogram(ms);
      const eval::Latency l = eval::latency_summary(ms);
      std::cout << std::setprecision(4) << "p50 " << l.p50 << " ms, p95 " << l.p95
                << " ms, p99 " << l.p99 << " ms, max " << l.max << " ms\n";
      if (!bench_out.empty()) {
        auto out = open_out(bench_out);
        out << "call,latency_ms\n";
        for (std::size_t i = 0; i < ms.size(); ++i)
          io::write_row(out, {std::to_string(i), io::format_double(ms[i])});
      }
      if (!(l.p99 < bench_budget))
        throw CheckFailed("p99 " + io::format_double(l.p99) + " ms exceeds the " +
                          io::format_double(bench_budget) + " ms budget");
      std::cout << "p99 within the " << bench_budget << " ms budget\n";
    } else if (*baseline) {
      const eval::RunConfig c = base_c.load();
      const sim::Dataset d = sim::load(base_in);
      std::optional<std::vector<physics::RobotState>> labels;
      if (!base_labels.empty()) labels = read_labels(base_labels);
      const learn::Scenario s = eval::scenario_for(c, d.sensors, labels);
      auto out = open_out(base_out);
      learn::write_baseline(s, c.loop.iterations, out);
      std::cout << "wrote dead-reckoning predictions to " << base_out << '\n';
    } else if (*cmp) {
      auto read = [](const std::string& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return eval::MetricsReport::from_json(ss.str());
      };
      const eval::Comparison c = eval::compare(read(cmp_a), read(cmp_b));
      eval::write_comparison_text(c, std::cout);
      if (!cmp_out.empty()) {
        auto out = open_out(cmp_out);
        eval::write_comparison_csv(c, out);
      }
    }
  } catch (const CheckFailed& e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return kInvalid;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kInvalid;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kInvalid;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kInvalid;
  } catch (const ShapeError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return kOk;
}
