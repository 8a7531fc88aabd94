#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anonle/engine.hpp"
#include "anonle/graph.hpp"
#include "anonle/rng.hpp"
#include "json.hpp"

namespace anonle::known_n {

struct KnownNParams {
  std::uint64_t n_known = 1;
  std::uint64_t t_mix = 1;
  double phi = 1.0;
  std::uint32_t c = 4;
  double x_multiplier = 1.0;
  std::uint64_t x = 1;

  std::uint32_t log_n = 0;  // ceil(log2 n_known)
  std::uint64_t id_space_max = 1;
  double candidate_prob = 1.0;
  std::uint32_t superround_width = 1;
  std::uint64_t walk_length = 1;
  std::uint64_t territory_cap = 1;

  // Initialize the walk maximum to the node's own ID at every node, as the
  // literal pseudocode does, and drop the candidate check from the leader
  // predicate.
  bool strict_pseudocode = false;
  // Informed nodes per thread may not exceed this multiple of territory_cap.
  std::uint32_t informed_slack = 4;

  // Rounds of the broadcast phase, c * t_mix * log_n super-rounds.
  std::uint64_t phase_length() const { return c * t_mix * log_n; }
  std::uint64_t walk_start() const { return phase_length() * superround_width; }
  std::uint64_t convergecast_start() const { return walk_start() + walk_length; }
  std::uint64_t decision_round() const { return convergecast_start() + phase_length(); }

  nlohmann::json to_json() const;
};

/// x = ceil(mult * sqrt(n * ceil(log2 n) / (phi * t_mix))).
std::uint64_t choose_x(std::uint64_t n, double phi, std::uint64_t t_mix, double x_multiplier);

/// Fills every derived field. When `x` is given it replaces choose_x.
KnownNParams make_params(std::uint64_t n_known, double phi, std::uint64_t t_mix,
                         std::uint32_t c = 4, double x_multiplier = 1.0,
                         std::optional<std::uint64_t> x = std::nullopt);

void validate(const KnownNParams& params);

struct Role {
  bool candidate = false;
  std::uint64_t id = 0;
};

/// Draws the ID first, then the candidate flag, from the given stream.
Role sample_role(RngStream& rng, const KnownNParams& params);

enum class SearchStatus : std::uint8_t { passive, active, stop };

/// One cautious-broadcast execution as seen by one node.
struct Thread {
  std::uint64_t source_id = 0;
  bool is_source = false;
  bool informed = false;
  std::uint32_t slot = 0;
  Port parent = 0;  // 0 while unset
  SearchStatus status = SearchStatus::passive;
  bool stop_sent = false;
  std::uint64_t threshold = 1;
  std::uint64_t confirmed = 1;  // 1 + last sizes reported by children
  std::vector<std::uint64_t> child_size;
  std::vector<SearchStatus> child_status;
  std::vector<std::uint8_t> is_child;
  std::vector<std::uint8_t> stop_from;
  std::vector<Port> avail;
  std::vector<std::uint32_t> avail_pos;  // index into avail + 1, 0 when absent

  struct Pending {
    Port port;
    std::uint8_t kind;
    std::uint64_t value;
    std::uint64_t sent_super;
  };
  std::vector<Pending> inbox;
};

/// Message kinds on the wire.
enum Kind : std::uint8_t {
  kOffer = 1,
  kSize = 2,
  kActivate = 3,
  kDeactivate = 4,
  kStop = 5,
  kWalk = 6,
  kConvergecast = 7,
};

class KnownNNode {
 public:
  KnownNNode(std::uint32_t degree, const KnownNParams* params, NodeRng rng,
             std::optional<Role> forced_role = std::nullopt);

  sim::StepResult step(std::uint64_t round, sim::Inbox inbox, sim::Outbox outbox);
  nlohmann::json observe() const;

  bool candidate() const { return role_.candidate; }
  std::uint64_t id() const { return role_.id; }
  std::uint64_t id_max() const { return id_max_; }
  std::uint64_t resident_tokens() const { return resident_; }
  bool leader() const { return leader_; }
  bool dropped_thread() const { return dropped_; }
  std::span<const Thread> threads() const { return threads_; }
  const Thread* find_thread(std::uint64_t source_id) const;

  std::uint8_t id_width() const { return id_width_; }
  std::uint8_t size_width() const { return size_width_; }
  std::uint8_t count_width() const { return count_width_; }

 private:
  Thread& new_thread(std::uint64_t source_id, std::uint32_t slot);
  Thread* thread_by_id(std::uint64_t source_id);
  void buffer_broadcast_mail(std::uint64_t round, sim::Inbox inbox);
  void admit_new_threads(std::uint64_t super);
  void thread_step(Thread& t, std::uint64_t super, sim::Outbox outbox);
  void send_stop(Thread& t, sim::Outbox outbox);
  bool has_work(const Thread& t) const;
  std::uint64_t next_thread_round(const Thread& t, std::uint64_t round) const;
  std::uint64_t broadcast_wake(std::uint64_t round) const;
  std::uint64_t after_broadcast_wake() const;
  void remove_avail(Thread& t, Port p);
  void move_tokens(sim::Outbox outbox);
  void fold_walks(sim::Inbox inbox);
  void fold_convergecast(sim::Inbox inbox);
  sim::LinkPayload thread_message(std::uint8_t kind, std::uint64_t source_id,
                                  std::uint64_t value) const;

  std::uint32_t degree_;
  const KnownNParams* params_;
  RngStream broadcast_rng_;
  RngStream walk_rng_;
  Role role_;
  std::vector<Thread> threads_;
  std::vector<std::uint8_t> slot_used_;
  struct Offer {
    std::uint64_t source_id;
    Port port;
    std::uint64_t sent_super;
  };
  std::vector<Offer> unknown_offers_;
  bool dropped_ = false;

  std::uint64_t id_max_ = 0;
  std::uint64_t resident_ = 0;
  std::uint64_t last_sent_ = 0;
  bool leader_ = false;

  std::uint8_t id_width_;
  std::uint8_t size_width_;
  std::uint8_t count_width_;
  std::uint64_t size_max_;
  std::vector<std::uint64_t> port_counts_;
};

struct ElectionOptions {
  sim::RunConfig run;
  // Per-round checks of walk conservation, monotone maxima, territory
  // bounds, and tree validity at the end of the broadcast phase.
  bool check_invariants = false;
  // Test hook: replaces the sampled role of node v when set.
  std::vector<std::optional<Role>> forced_roles;
};

struct ElectionOutcome {
  std::vector<NodeIndex> leaders;
  std::vector<NodeIndex> candidates;
  std::vector<std::uint64_t> candidate_ids;
  std::uint64_t global_max_id = 0;
  bool zero_candidates = false;
  bool no_leader = false;
  bool multiple_leaders = false;
  bool duplicate_id = false;
  bool multiplex_overflow = false;
  std::map<std::uint64_t, std::uint64_t> territory_sizes;    // informed nodes per thread
  std::map<std::uint64_t, std::uint64_t> source_confirmed;   // final confirmed count at source
  std::map<std::uint64_t, bool> walk_hit;  // territory saw the global maximum
  std::uint64_t max_source_confirmed_seen = 0;
  std::uint64_t max_informed_seen = 0;
  std::vector<std::string> invariant_violations;
  sim::RunMetrics metrics;

  bool exactly_one_leader() const { return leaders.size() == 1; }
  std::vector<std::string> flags() const;
  nlohmann::json to_json() const;
};

ElectionOutcome elect_known_n(const PortGraph& graph, const KnownNParams& params,
                              const ElectionOptions& options = {});

/// Parent pointers of one thread must form a single tree rooted at its
/// source. Returns a description of the first problem found.
std::optional<std::string> check_tree(const PortGraph& graph,
                                      std::span<const KnownNNode> nodes,
                                      std::uint64_t source_id);

}  // namespace anonle::known_n
