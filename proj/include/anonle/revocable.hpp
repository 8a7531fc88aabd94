#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "anonle/engine.hpp"
#include "anonle/graph.hpp"
#include "anonle/metrics.hpp"
#include "json.hpp"

namespace anonle::revocable {

struct ScheduleParams {
  std::uint64_t k = 2;
  double epsilon = 1.0;
  double xi = 0.1;
  std::optional<double> i_G;

  double s = 4.0;                   // k^(1+eps)
  std::uint64_t dissemination = 4;  // ceil(s) rounds
  std::uint64_t r_formula = 1;      // before scaling
  std::uint64_t f_formula = 1;
  std::uint64_t r_k = 1;
  std::uint64_t f_k = 1;
  double p_k = 0.0;
  double tau_k = 0.0;
  std::optional<Rational> tau_exact;  // when s is an integer
  std::uint64_t id_range_max = 1;
  double share = 0.125;  // 1 / (2s)
  double r_scale = 1.0;
  double f_scale = 1.0;

  bool uses_isoperimetric() const { return i_G.has_value(); }
  bool scaled() const { return r_scale != 1.0 || f_scale != 1.0; }
  // 2s when it is an integer, which exact potentials require.
  std::optional<std::uint64_t> integral_denominator() const;
  nlohmann::json to_json() const;
};

/// All schedule functions for estimate k, with log base 2. The
/// isoperimetric form of r(k) is used when i_G is given, the i_G-free form
/// otherwise; r_scale and f_scale multiply the ceilinged values last.
ScheduleParams schedule(std::uint64_t k, double epsilon, double xi,
                        std::optional<double> i_G = std::nullopt, double r_scale = 1.0,
                        double f_scale = 1.0);

// --- potentials -------------------------------------------------------------

/// Unsigned fixed point with 64 fractional bits; 1.0 is 2^64.
using Fixed = unsigned __int128;
inline constexpr Fixed kFixedOne = static_cast<Fixed>(1) << 64;

/// Denominator of the diffusion share in fixed point: round(2s * 2^32).
std::uint64_t share_denominator_q32(double s);

/// One node's averaging update: self + (sum - deg * self) / (2s), truncated
/// toward zero so the value stays within [0, 1].
Fixed fixed_update(Fixed self, Fixed neighbor_sum, std::uint32_t degree, std::uint64_t denom_q32);

double to_double(Fixed v);
Fixed from_double(double v);

/// Potentials of all nodes as numerators over a shared denominator D^t.
struct ExactPotentials {
  std::vector<mpz_class> numerators;
  mpz_class denominator = 1;
  std::uint64_t D = 8;

  static ExactPotentials from_colors(const std::vector<bool>& white, std::uint64_t D);
  mpq_class value(NodeIndex v) const;
  mpq_class total() const;
};

/// One synchronous diffusion step over the whole graph (no alarms).
void diffusion_step(const PortGraph& g, ExactPotentials& p);
void diffusion_step(const PortGraph& g, std::vector<Fixed>& p, std::uint64_t denom_q32);

/// Conductance of the diffusion chain with share 1/(2s): i(G) / (2s).
Rational diffusion_chain_conductance(const Rational& isoperimetric, std::uint64_t two_s);

// --- leader views and decisions ---------------------------------------------

struct LeaderView {
  std::uint64_t id = 0;  // 0 is nil
  std::uint64_t K = 0;

  bool nil() const { return id == 0; }
  friend bool operator==(const LeaderView&, const LeaderView&) = default;
};

/// Larger K wins, equal K prefers the smaller id; nil never wins.
LeaderView fold_view(LeaderView mine, LeaderView theirs);

/// Strictly more than half the iterations saw no white node and at least one
/// ended probing.
bool should_choose_id(bool has_id, std::span<const std::uint8_t> empty,
                      std::span<const std::uint8_t> probing);

enum class PotentialMode { fixed_point, exact };

struct NodeConfig {
  double epsilon = 1.0;
  double xi = 0.1;
  std::optional<double> i_G;
  double r_scale = 1.0;
  double f_scale = 1.0;
  PotentialMode mode = PotentialMode::fixed_point;
  std::uint64_t k_limit = 0;  // the node halts after deciding for this k
};

class RevocableNode {
 public:
  RevocableNode(std::uint32_t degree, const NodeConfig* config, NodeRng rng);

  sim::StepResult step(std::uint64_t round, sim::Inbox inbox, sim::Outbox outbox);
  nlohmann::json observe() const;

  std::uint64_t k() const { return sched_.k; }
  const ScheduleParams& current_schedule() const { return sched_; }
  std::uint64_t id() const { return id_; }
  std::uint64_t K() const { return K_; }
  LeaderView view() const { return view_; }
  bool leader() const { return leader_; }
  bool leader_predicate() const { return id_ != 0 && view_.id == id_ && view_.K == K_; }
  bool white() const { return white_; }
  bool low() const { return low_; }
  bool white_seen() const { return c_; }
  double potential() const;
  std::uint64_t alarms() const { return alarms_; }
  std::uint64_t iteration() const { return iter_; }
  // Outcome of the most recently finished certification iteration.
  bool last_empty() const { return last_empty_; }
  bool last_probing() const { return last_probing_; }

 private:
  void start_iteration(sim::Outbox outbox, sim::StepResult& res);
  void finish_iteration();
  void diffusion_update(sim::Inbox inbox);
  void threshold_check();
  void fold_status(sim::Inbox inbox, bool with_q_c);
  sim::LinkPayload status_message(std::uint8_t kind) const;
  void set_schedule(std::uint64_t k);
  std::uint64_t iteration_length() const { return sched_.r_k + sched_.dissemination; }

  std::uint32_t degree_;
  const NodeConfig* config_;
  RngStream color_rng_;
  RngStream id_rng_;
  ScheduleParams sched_;
  std::uint64_t denom_q32_ = 0;
  std::uint64_t D_ = 0;
  std::uint32_t log_D_ = 0;
  std::uint8_t id_width_ = 1;
  std::uint32_t surcharge_unit_ = 0;

  std::uint64_t id_ = 0;
  std::uint64_t K_ = 0;
  LeaderView view_;
  bool leader_ = false;
  std::vector<std::uint8_t> empty_;
  std::vector<std::uint8_t> probing_;
  std::uint64_t iter_ = 0;
  std::uint64_t iter_start_ = 0;

  bool white_ = false;
  bool low_ = false;
  bool c_ = false;
  Fixed pot_ = 0;
  mpz_class num_;
  mpz_class den_;
  std::uint64_t alarms_ = 0;
  bool last_empty_ = false;
  bool last_probing_ = false;
  bool halted_ = false;
};

struct RevocableConfig {
  double epsilon = 1.0;
  double xi = 0.1;
  std::optional<double> i_G;
  double r_scale = 1.0;
  double f_scale = 1.0;
  PotentialMode mode = PotentialMode::fixed_point;
  // Simulate k = 2, 4, ..., max_k. When unset: until k^(1+eps) > 4n, then
  // one more doubling.
  std::optional<std::uint64_t> max_k;
  sim::RunConfig run;
};

struct KSnapshot {
  std::uint64_t k = 0;
  ScheduleParams schedule;
  std::vector<NodeIndex> leaders;       // leader flag after the decision
  std::uint64_t ids_chosen = 0;         // nodes that drew an id at this k
  bool unanimous = false;               // identical non-nil view everywhere
  LeaderView view;                      // the common view when unanimous
  std::vector<std::uint64_t> whites_per_iter;
  std::vector<std::uint64_t> empty_iters_per_node;
  std::uint64_t alarms = 0;
  std::uint64_t rounds_logical = 0;
  std::uint64_t rounds_accounted = 0;
  std::uint64_t messages = 0;
  std::uint64_t bits = 0;
  std::uint64_t revocations = 0;  // leader flags that went true -> false
  // Leader predicate and views unchanged at every iteration boundary after
  // the first one of this k, with no id drawn during the k.
  bool stable_within = false;
};

struct RevocableOutcome {
  std::vector<KSnapshot> per_k;
  std::vector<NodeIndex> final_leaders;
  std::vector<LeaderView> final_views;
  std::vector<std::uint64_t> ids;
  std::vector<std::uint64_t> certificates;
  bool exactly_one_leader = false;
  bool unanimous = false;
  bool stabilized = false;
  std::uint64_t total_revocations = 0;
  std::uint64_t logical_rounds = 0;
  bool scaled = false;
  nlohmann::json deviations = nlohmann::json::array();
  sim::RunMetrics metrics;

  bool success() const { return exactly_one_leader && unanimous && stabilized; }
  nlohmann::json to_json() const;
};

/// The estimates simulated under the default stop policy or an explicit max_k.
std::vector<std::uint64_t> k_sequence(std::size_t n, double epsilon,
                                      std::optional<std::uint64_t> max_k);

/// Logical rounds a run will execute (all nodes advance in lockstep).
std::uint64_t planned_rounds(std::size_t n, const RevocableConfig& config);

RevocableOutcome run_revocable(const PortGraph& graph, const RevocableConfig& config);

}  // namespace anonle::revocable
