#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "anonle/graph.hpp"
#include "anonle/known_n.hpp"
#include "anonle/metrics.hpp"
#include "anonle/revocable.hpp"
#include "json.hpp"

namespace anonle::harness {

enum class Protocol { known_n, revocable };

struct ExperimentSpec {
  Protocol protocol = Protocol::known_n;
  std::string family = "regular4";
  std::vector<std::size_t> sizes;
  std::uint32_t trials = 1;
  std::uint64_t seed_base = 1;
  std::uint64_t graph_seed = 1;
  unsigned threads = 1;

  // known_n overrides
  std::uint32_t c = 4;
  double x_multiplier = 1.0;
  bool strict_pseudocode = false;

  // revocable overrides
  double epsilon = 1.0;
  double xi = 0.1;
  bool use_isoperimetric = true;  // exact i(G) when n is within the cut cap
  double r_scale = 1.0;
  double f_scale = 1.0;
  std::optional<std::uint64_t> max_k;

  std::string csv_path;
  std::string summary_path;
};

/// Parses the INI-style spec. Errors carry the offending line when known.
ExperimentSpec parse_spec(std::string_view text);
ExperimentSpec load_spec(const std::string& path);
void validate(const ExperimentSpec& spec);

/// Graph quantities the protocols are parameterized with: exact up to the
/// cut cap, sweep-cut (an upper bound on the conductance) above it.
struct ProtocolInputs {
  double phi = 1.0;
  std::optional<double> isoperimetric;
  std::uint64_t t_mix = 1;
  bool exact = true;
};
ProtocolInputs protocol_inputs(const PortGraph& g);

struct TrialRow {
  std::size_t n = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  std::uint64_t messages = 0;
  std::uint64_t bits = 0;
  std::uint64_t rounds = 0;
  std::uint64_t accounted_rounds = 0;
  std::size_t leaders = 0;
  bool exactly_one = false;
  std::vector<std::string> flags;
};

inline constexpr std::string_view kCsvHeader =
    "protocol,family,n,m,seed,messages,bits,rounds,accounted_rounds,leaders,exactly_one,flags";

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<TrialRow> rows;  // ordered by (size, seed)
  nlohmann::json summary;

  std::string csv() const;
};

ExperimentResult run_experiment(const ExperimentSpec& spec);
/// Runs and writes the CSV and summary files named in the spec.
ExperimentResult run_experiment_to_files(const ExperimentSpec& spec);

struct ScalingFit {
  std::vector<std::pair<double, double>> points;
  double exponent = 0.0;
  double intercept = 0.0;
  double r2 = 1.0;

  nlohmann::json to_json() const;
};

/// Least-squares slope of log(y) against log(x).
ScalingFit scaling_fit(const std::vector<std::pair<double, double>>& points);

/// Groups a CSV by column `x`, averages column `y` per group and fits.
ScalingFit fit_csv(std::string_view csv_text, const std::string& x_column = "n",
                   const std::string& y_column = "messages");

struct PumpingReport {
  std::size_t n_claimed = 0;
  std::size_t n_actual = 0;
  std::uint32_t trials = 0;
  std::uint32_t exactly_one = 0;
  std::uint32_t zero_leaders = 0;
  std::uint32_t multiple_leaders = 0;
  known_n::KnownNParams params;

  double failure_frequency() const {
    return trials == 0 ? 0.0 : static_cast<double>(trials - exactly_one) / trials;
  }
  nlohmann::json to_json() const;
};

/// Runs the known-n protocol configured for a cycle of n_claimed nodes on a
/// cycle of n_actual nodes. Requires n_actual >= 4 * n_claimed.
PumpingReport pumping_wheel_demo(std::size_t n_claimed, std::size_t n_actual,
                                 std::uint32_t trials, std::uint64_t seed, std::uint32_t c = 4);

/// CSV rows (one per estimate k) for a single revocable run.
std::string revocable_k_csv(const revocable::RevocableOutcome& out, std::uint64_t seed);

}  // namespace anonle::harness
