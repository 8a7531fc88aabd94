#include <fstream>
#include <limits>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "anonle/errors.hpp"
#include "anonle/graph.hpp"
#include "anonle/harness.hpp"
#include "anonle/known_n.hpp"
#include "anonle/metrics.hpp"
#include "anonle/revocable.hpp"

using namespace anonle;

namespace {

struct GraphSource {
  std::string file;
  std::string family;
  std::size_t n = 0;
  std::uint64_t seed = 1;

  void attach(CLI::App* cmd, bool positional) {
    if (positional) {
      cmd->add_option("graph", file, "Edge-list file (one 'u v' pair per line)");
    } else {
      cmd->add_option("--graph", file, "Edge-list file (one 'u v' pair per line)");
    }
    cmd->add_option("--family", family, "cycle, path, complete, regular<d> or er<p>");
    cmd->add_option("--n", n, "Number of nodes for --family");
    cmd->add_option("--graph-seed", seed, "Seed for random families");
  }

  PortGraph load() const {
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw InvalidParameter("cannot open graph file '" + file + "'");
      std::stringstream buf;
      buf << in.rdbuf();
      return load_edge_list(buf.str());
    }
    if (family.empty() || n == 0) {
      throw InvalidParameter("give a graph file or both --family and --n");
    }
    return make_family(family, n, seed);
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leader election on anonymous networks: simulator and experiment harness"};
  app.require_subcommand(1);

  // metrics
  GraphSource metrics_graph;
  auto* metrics_cmd = app.add_subcommand("metrics", "Conductance, isoperimetric number, mixing time");
  metrics_graph.attach(metrics_cmd, true);

  // elect-known-n
  GraphSource kn_graph;
  std::uint64_t kn_seed = 1;
  std::uint32_t kn_c = 4;
  double kn_xmult = 1.0;
  std::optional<std::uint64_t> kn_x, kn_n_known, kn_tmix;
  std::optional<std::uint32_t> kn_budget;
  std::optional<double> kn_phi;
  bool kn_strict = false, kn_check = false;
  std::string kn_trace;
  auto* kn_cmd = app.add_subcommand("elect-known-n", "Run the known-n election once");
  kn_graph.attach(kn_cmd, false);
  kn_cmd->add_option("--seed", kn_seed, "Master seed");
  kn_cmd->add_option("--c", kn_c, "Phase-length constant");
  kn_cmd->add_option("--x-mult", kn_xmult, "Multiplier on the number of walk tokens");
  kn_cmd->add_option("--x", kn_x, "Walk tokens per candidate (overrides --x-mult)");
  kn_cmd->add_option("--n-known", kn_n_known, "Node count the nodes are told (default: true n)");
  kn_cmd->add_option("--phi", kn_phi, "Conductance given to the nodes (default: computed)");
  kn_cmd->add_option("--tmix", kn_tmix, "Mixing time given to the nodes (default: computed)");
  kn_cmd->add_option("--budget", kn_budget, "Fixed per-message bit budget");
  kn_cmd->add_flag("--strict", kn_strict, "Literal walk-maximum initialization");
  kn_cmd->add_flag("--check", kn_check, "Check protocol invariants every round");
  kn_cmd->add_option("--trace", kn_trace, "Write a JSONL trace to this file");

  // elect-revocable
  GraphSource rv_graph;
  std::uint64_t rv_seed = 1;
  double rv_eps = 1.0, rv_xi = 0.1, rv_rscale = 1.0, rv_fscale = 1.0;
  std::optional<double> rv_iG;
  bool rv_no_iG = false, rv_exact = false;
  std::optional<std::uint64_t> rv_maxk;
  std::optional<std::uint32_t> rv_budget;
  std::string rv_csv;
  auto* rv_cmd = app.add_subcommand("elect-revocable", "Run the revocable election once");
  rv_graph.attach(rv_cmd, false);
  rv_cmd->add_option("--seed", rv_seed, "Master seed");
  rv_cmd->add_option("--epsilon", rv_eps, "Exponent slack epsilon");
  rv_cmd->add_option("--xi", rv_xi, "Failure parameter xi");
  rv_cmd->add_option("--iG", rv_iG, "Isoperimetric number given to the nodes");
  rv_cmd->add_flag("--no-iG", rv_no_iG, "Use the schedule that does not need i(G)");
  rv_cmd->add_option("--r-scale", rv_rscale, "Multiplier on the diffusion length");
  rv_cmd->add_option("--f-scale", rv_fscale, "Multiplier on the iteration count");
  rv_cmd->add_option("--max-k", rv_maxk, "Largest estimate to simulate");
  rv_cmd->add_flag("--exact", rv_exact, "Exact rational potentials");
  rv_cmd->add_option("--budget", rv_budget, "Fixed per-message bit budget");
  rv_cmd->add_option("--csv", rv_csv, "Write one row per estimate k to this file");

  // sweep
  std::string sweep_spec;
  unsigned sweep_threads = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment described by an INI file");
  sweep_cmd->add_option("spec", sweep_spec, "Experiment spec")->required();
  sweep_cmd->add_option("--threads", sweep_threads, "Worker threads (overrides the spec)");

  // fit
  std::string fit_path, fit_x = "n", fit_y = "messages";
  auto* fit_cmd = app.add_subcommand("fit", "Log-log scaling fit over a sweep CSV");
  fit_cmd->add_option("csv", fit_path, "CSV file")->required();
  fit_cmd->add_option("--x", fit_x, "Column for the size");
  fit_cmd->add_option("--y", fit_y, "Column to fit");

  // pumping-demo
  std::size_t pd_claimed = 8, pd_actual = 64;
  std::uint32_t pd_trials = 100, pd_c = 4;
  std::uint64_t pd_seed = 1;
  auto* pd_cmd = app.add_subcommand("pumping-demo",
                                    "Known-n election tuned for a small cycle, run on a big one");
  pd_cmd->add_option("--n-claimed", pd_claimed, "Cycle size the parameters are computed for");
  pd_cmd->add_option("--n-actual", pd_actual, "Cycle size actually simulated");
  pd_cmd->add_option("--trials", pd_trials, "Number of seeds");
  pd_cmd->add_option("--seed", pd_seed, "First seed");
  pd_cmd->add_option("--c", pd_c, "Phase-length constant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*metrics_cmd) {
      PortGraph g = metrics_graph.load();
      std::cout << to_json(compute_metrics(g)).dump(2) << '\n';
    } else if (*kn_cmd) {
      PortGraph g = kn_graph.load();
      double phi = 1.0;
      std::uint64_t tmix = 1;
      if (!kn_phi || !kn_tmix) {
        auto in = harness::protocol_inputs(g);
        phi = in.phi;
        tmix = in.t_mix;
      }
      if (kn_phi) phi = *kn_phi;
      if (kn_tmix) tmix = *kn_tmix;
      auto params = known_n::make_params(kn_n_known.value_or(g.node_count()), phi, tmix, kn_c,
                                         kn_xmult, kn_x);
      params.strict_pseudocode = kn_strict;
      known_n::ElectionOptions opts;
      opts.run.master_seed = kn_seed;
      opts.run.bit_budget_B = kn_budget;
      opts.check_invariants = kn_check;
      std::ofstream trace;
      if (!kn_trace.empty()) {
        trace.open(kn_trace);
        if (!trace) throw InvalidParameter("cannot write '" + kn_trace + "'");
        opts.run.trace = &trace;
        opts.run.trace_level = sim::TraceLevel::messages;
      }
      auto out = known_n::elect_known_n(g, params, opts);
      nlohmann::json j = out.to_json();
      j["params"] = params.to_json();
      std::cout << j.dump(2) << '\n';
    } else if (*rv_cmd) {
      PortGraph g = rv_graph.load();
      revocable::RevocableConfig cfg;
      cfg.epsilon = rv_eps;
      cfg.xi = rv_xi;
      cfg.r_scale = rv_rscale;
      cfg.f_scale = rv_fscale;
      cfg.max_k = rv_maxk;
      cfg.mode = rv_exact ? revocable::PotentialMode::exact : revocable::PotentialMode::fixed_point;
      cfg.run.master_seed = rv_seed;
      cfg.run.bit_budget_B = rv_budget;
      cfg.run.max_rounds = std::numeric_limits<std::uint64_t>::max();
      if (rv_iG) {
        cfg.i_G = rv_iG;
      } else if (!rv_no_iG) {
        cfg.i_G = harness::protocol_inputs(g).isoperimetric;
      }
      auto out = revocable::run_revocable(g, cfg);
      if (!rv_csv.empty()) {
        std::ofstream csv(rv_csv);
        if (!csv) throw InvalidParameter("cannot write '" + rv_csv + "'");
        csv << harness::revocable_k_csv(out, rv_seed);
      }
      std::cout << out.to_json().dump(2) << '\n';
    } else if (*sweep_cmd) {
      auto spec = harness::load_spec(sweep_spec);
      if (sweep_threads > 0) spec.threads = sweep_threads;
      auto result = harness::run_experiment_to_files(spec);
      if (spec.csv_path.empty()) std::cout << result.csv();
      std::cout << result.summary.dump(2) << '\n';
    } else if (*fit_cmd) {
      auto fit = harness::fit_csv(read_file(fit_path), fit_x, fit_y);
      std::cout << fit.to_json().dump(2) << '\n';
    } else if (*pd_cmd) {
      auto report = harness::pumping_wheel_demo(pd_claimed, pd_actual, pd_trials, pd_seed, pd_c);
      std::cout << report.to_json().dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
