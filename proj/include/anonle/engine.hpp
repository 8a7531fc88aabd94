#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <concepts>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "anonle/graph.hpp"
#include "anonle/rng.hpp"
#include "json.hpp"

namespace anonle::sim {

/// Smallest field width able to hold every value in [0, max_value].
constexpr std::uint8_t bits_for(std::uint64_t max_value) {
  return static_cast<std::uint8_t>(std::max<int>(1, std::bit_width(max_value)));
}

/// Structured content of one directed link in one round.
///
/// The encoding is: a 4-bit kind tag, then each field in its declared width,
/// then an optional bit-serial tail. The tail models a value that is pushed
/// through the link one bit per round; it is charged to bits_sent and to the
/// round surcharge but not to the per-round bit budget.
class LinkPayload {
 public:
  static constexpr std::uint32_t kKindBits = 4;
  static constexpr std::size_t kMaxFields = 6;

  LinkPayload() = default;
  explicit LinkPayload(std::uint8_t kind) : kind_(kind) {}

  LinkPayload& add(std::uint64_t value, std::uint8_t width) {
    if (count_ == kMaxFields) throw std::length_error("LinkPayload: too many fields");
    fields_[count_++] = {value, width};
    return *this;
  }
  // Limbs are little-endian 64-bit words of a nonnegative integer.
  LinkPayload& set_serial(std::span<const std::uint64_t> limbs, std::uint32_t width) {
    serial_count_ = static_cast<std::uint32_t>(limbs.size());
    if (limbs.size() <= kInlineLimbs) {
      std::copy(limbs.begin(), limbs.end(), inline_.begin());
      heap_.clear();
    } else {
      heap_.assign(limbs.begin(), limbs.end());
    }
    serial_width_ = width;
    return *this;
  }

  std::uint8_t kind() const { return kind_; }
  std::size_t field_count() const { return count_; }
  std::uint64_t field(std::size_t i) const { return fields_[i].value; }
  std::uint8_t field_width(std::size_t i) const { return fields_[i].width; }
  std::span<const std::uint64_t> serial() const {
    if (serial_count_ <= kInlineLimbs) return {inline_.data(), serial_count_};
    return heap_;
  }
  std::uint32_t serial_width() const { return serial_width_; }

  std::uint32_t framed_bits() const {
    std::uint32_t bits = kKindBits;
    for (std::size_t i = 0; i < count_; ++i) bits += fields_[i].width;
    return bits;
  }
  std::uint64_t encoded_bits() const { return framed_bits() + serial_width_; }

  // Every value fits in its declared width.
  bool well_formed() const {
    if (kind_ >= (1u << kKindBits)) return false;
    for (std::size_t i = 0; i < count_; ++i) {
      if (fields_[i].width < 64 && fields_[i].value >> fields_[i].width) return false;
    }
    std::uint64_t used = 0;
    const auto limbs = serial();
    for (std::size_t i = 0; i < limbs.size(); ++i) {
      if (limbs[i] != 0) used = 64 * i + std::bit_width(limbs[i]);
    }
    return used <= serial_width_;
  }

 private:
  struct Field {
    std::uint64_t value = 0;
    std::uint8_t width = 0;
  };
  std::uint8_t kind_ = 0;
  std::uint8_t count_ = 0;
  std::array<Field, kMaxFields> fields_{};
  static constexpr std::size_t kInlineLimbs = 2;
  std::array<std::uint64_t, kInlineLimbs> inline_{};
  std::vector<std::uint64_t> heap_;
  std::uint32_t serial_count_ = 0;
  std::uint32_t serial_width_ = 0;
};

using Inbox = std::span<const std::optional<LinkPayload>>;
using Outbox = std::span<std::optional<LinkPayload>>;

inline constexpr std::uint64_t kNever = UINT64_MAX;

struct StepResult {
  bool halted = false;
  // The node asks not to be stepped before this round unless mail arrives.
  // Values <= the current round mean "next round". The automaton guarantees
  // that stepping it earlier with an empty inbox would be a no-op.
  std::uint64_t idle_until = 0;
  // Extra rounds this round costs in the accounted time (bit-serial transfers).
  std::uint64_t surcharge_rounds = 0;
  // Largest quantity the protocol currently needs to encode; drives the
  // default per-link bit budget.
  std::uint64_t size_scale = 0;
  std::string_view phase = "main";
};

template <typename A>
concept NodeAutomaton = requires(A a, const A ca, std::uint64_t round, Inbox in, Outbox out) {
  { a.step(round, in, out) } -> std::same_as<StepResult>;
  { ca.observe() } -> std::convertible_to<nlohmann::json>;
};

enum class TraceLevel { none, messages };

struct RunConfig {
  std::uint64_t master_seed = 1;
  // Fixed per-link, per-direction, per-round budget. When unset the budget is
  // default_bit_budget(max(declared size scale, n)).
  std::optional<std::uint32_t> bit_budget_B;
  std::uint64_t max_rounds = 1'000'000;
  TraceLevel trace_level = TraceLevel::none;
  std::ostream* trace = nullptr;
  // Optional fixed schedule of (first round, phase label), ascending. When
  // present it labels every round, including skipped silent ones, instead of
  // the labels automata report.
  std::vector<std::pair<std::uint64_t, std::string>> phase_starts;
};

inline std::uint32_t ceil_log2(std::uint64_t x) {
  return x <= 1 ? 0 : static_cast<std::uint32_t>(std::bit_width(x - 1));
}

/// 8 * ceil(log2 scale) + 16: an O(log n) budget with explicit constants.
inline std::uint32_t default_bit_budget(std::uint64_t scale) {
  return 8 * std::max<std::uint32_t>(1, ceil_log2(std::max<std::uint64_t>(scale, 2))) + 16;
}

struct PhaseMetrics {
  std::uint64_t rounds = 0;
  std::uint64_t messages = 0;
  std::uint64_t bits = 0;
};

struct RunMetrics {
  std::uint64_t rounds_executed = 0;
  std::uint64_t accounted_rounds = 0;
  std::uint64_t messages_sent = 0;
  std::uint64_t bits_sent = 0;
  std::uint64_t framed_bits_sent = 0;
  std::uint32_t max_framed_bits = 0;
  std::uint32_t max_budget = 0;
  std::map<std::string, PhaseMetrics> phases;
  std::vector<std::uint64_t> whites_count;
  bool timed_out = false;
  bool all_halted = false;
  std::vector<std::string> violations;
  nlohmann::json outcome = nlohmann::json::object();

  nlohmann::json to_json() const;
};

class BudgetViolation : public std::runtime_error {
 public:
  BudgetViolation(std::uint64_t round, NodeIndex node, Port port, std::uint8_t kind,
                  std::uint32_t bits, std::uint32_t budget);

  std::uint64_t round;
  NodeIndex node;
  Port port;
  std::uint8_t kind;
  std::uint32_t bits;
  std::uint32_t budget;
};

class MalformedPayload : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_trace_record(std::ostream& out, std::uint64_t round, NodeIndex node, Port port,
                        const LinkPayload& payload);

/// Lockstep executor. In round r every scheduled automaton reads the mail
/// sent to it in round r-1 and writes its outbox; outboxes are delivered
/// after all automata of round r have stepped.
template <NodeAutomaton A>
class Simulation {
 public:
  using Factory = std::function<A(std::uint32_t degree, NodeRng rng)>;
  using Observer = std::function<void(std::uint64_t round, Simulation& sim)>;

  Simulation(const PortGraph& graph, const Factory& factory, RunConfig config)
      : graph_(graph), config_(config) {
    if (config_.max_rounds == 0) throw std::invalid_argument("max_rounds must be >= 1");
    if (config_.bit_budget_B && *config_.bit_budget_B == 0) {
      throw std::invalid_argument("bit_budget_B must be >= 1");
    }
    const std::size_t n = graph.node_count();
    nodes_.reserve(n);
    for (NodeIndex v = 0; v < n; ++v) nodes_.push_back(factory(graph.degree(v), NodeRng(config_.master_seed, v)));
    const std::size_t slots = 2 * graph.edge_count();
    inbox_.resize(slots);
    outbox_.resize(slots);
    route_.resize(slots);
    owner_.resize(slots);
    for (NodeIndex v = 0; v < n; ++v) {
      for (Port p = 1; p <= graph.degree(v); ++p) {
        const PortEnd& e = graph.port(v, p);
        route_[graph.port_offset(v) + p - 1] = graph.port_offset(e.neighbor) + e.reciprocal - 1;
        owner_[graph.port_offset(v) + p - 1] = v;
      }
    }
    wake_.assign(n, 0);
    halted_.assign(n, false);
    has_mail_.assign(n, false);
    stamp_.assign(n, UINT64_MAX);
    for (NodeIndex v = 0; v < n; ++v) queue_.push({0, v});
  }

  // The simulation keeps a reference to the graph.
  Simulation(PortGraph&&, const Factory&, RunConfig) = delete;

  std::size_t size() const { return nodes_.size(); }
  A& node(NodeIndex v) { return nodes_[v]; }
  const A& node(NodeIndex v) const { return nodes_[v]; }
  std::span<const A> nodes() const { return nodes_; }
  const PortGraph& graph() const { return graph_; }
  std::uint64_t round() const { return round_; }
  RunMetrics& metrics() { return metrics_; }
  const RunMetrics& metrics() const { return metrics_; }
  void request_stop() { stop_ = true; }

  // Mail node v will read in the next round.
  Inbox pending_mail(NodeIndex v) const {
    return {inbox_.data() + graph_.port_offset(v), graph_.degree(v)};
  }

  RunMetrics run(const Observer& observer = {}) {
    while (!finished_) {
      if (!step_round()) break;
      if (observer) observer(round_ - 1, *this);
      if (stop_) break;
    }
    finish();
    return metrics_;
  }

  // Executes one round (possibly after skipping silent rounds). Returns
  // false when nothing remains to run.
  bool step_round() {
    if (finished_) return false;
    if (round_ >= config_.max_rounds) {
      metrics_.timed_out = true;
      finished_ = true;
      return false;
    }
    collect_due();
    if (due_.empty()) {
      // Nothing wants this round: jump to the next wake-up.
      std::uint64_t next = next_wake();
      if (next == kNever) {
        finished_ = true;
        return false;
      }
      if (next >= config_.max_rounds) {
        advance_silent(config_.max_rounds - round_);
        metrics_.timed_out = true;
        finished_ = true;
        return false;
      }
      advance_silent(next - round_);
      collect_due();
    }

    const std::uint64_t r = round_;
    std::uint64_t surcharge = 0;
    std::uint64_t scale = graph_.node_count();
    std::string_view phase_label = current_phase_;
    bool phase_set = false;
    for (NodeIndex v : due_) {
      const std::size_t off = graph_.port_offset(v);
      const std::uint32_t deg = graph_.degree(v);
      Inbox in{inbox_.data() + off, deg};
      Outbox out{outbox_.data() + off, deg};
      StepResult res = nodes_[v].step(r, in, out);
      for (std::size_t i = off; i < off + deg; ++i) inbox_[i].reset();
      has_mail_[v] = false;
      if (res.halted) {
        halted_[v] = true;
        ++halted_count_;
      } else {
        wake_[v] = res.idle_until > r ? res.idle_until : r + 1;
        if (wake_[v] != kNever) queue_.push({wake_[v], v});
      }
      surcharge = std::max(surcharge, res.surcharge_rounds);
      scale = std::max(scale, res.size_scale);
      if (!phase_set) {
        phase_label = res.phase;
        phase_set = true;
      }
    }
    if (!config_.phase_starts.empty()) phase_label = scheduled_label(r);
    if (phase_label != current_phase_ || current_metrics_ == nullptr) {
      current_phase_ = phase_label;
      current_metrics_ = &phase_metrics(current_phase_);
    }
    const std::uint32_t budget =
        config_.bit_budget_B ? *config_.bit_budget_B : default_bit_budget(scale);
    metrics_.max_budget = std::max(metrics_.max_budget, budget);
    PhaseMetrics& phase = *current_metrics_;
    phase.rounds += 1;

    for (NodeIndex v : due_) {
      const std::size_t off = graph_.port_offset(v);
      for (std::size_t i = off; i < off + graph_.degree(v); ++i) {
        if (!outbox_[i]) continue;
        const LinkPayload& payload = *outbox_[i];
        const auto p = static_cast<Port>(i - off + 1);
        if (!payload.well_formed()) {
          throw MalformedPayload("round " + std::to_string(r) + " node " + std::to_string(v) +
                                 " port " + std::to_string(p) + ": value exceeds its field width");
        }
        const std::uint32_t framed = payload.framed_bits();
        if (framed > budget) throw BudgetViolation(r, v, p, payload.kind(), framed, budget);
        const std::uint64_t bits = payload.encoded_bits();
        ++metrics_.messages_sent;
        metrics_.bits_sent += bits;
        metrics_.framed_bits_sent += framed;
        metrics_.max_framed_bits = std::max(metrics_.max_framed_bits, framed);
        ++phase.messages;
        phase.bits += bits;
        if (config_.trace_level == TraceLevel::messages && config_.trace) {
          write_trace_record(*config_.trace, r, v, p, payload);
        }
        const std::size_t dest = route_[i];
        const NodeIndex to = owner_[dest];
        if (!halted_[to]) {
          inbox_[dest] = std::move(outbox_[i]);
          if (!has_mail_[to]) {
            has_mail_[to] = true;
            mail_.push_back(to);
          }
        }
        outbox_[i].reset();
      }
    }
    metrics_.rounds_executed = r + 1;
    metrics_.accounted_rounds += 1 + surcharge;
    round_ = r + 1;
    if (halted_count_ == nodes_.size()) {
      metrics_.all_halted = true;
      finished_ = true;
    }
    return true;
  }

  void finish() {
    if (finalized_) return;
    finalized_ = true;
    metrics_.rounds_executed = round_;
    if (!metrics_.all_halted && round_ >= config_.max_rounds) metrics_.timed_out = true;
  }

 private:
  struct Wake {
    std::uint64_t round;
    NodeIndex node;
    bool operator>(const Wake& o) const {
      return round != o.round ? round > o.round : node > o.node;
    }
  };

  PhaseMetrics& phase_metrics(std::string_view label) {
    auto it = metrics_.phases.find(std::string(label));
    if (it == metrics_.phases.end()) it = metrics_.phases.emplace(std::string(label), PhaseMetrics{}).first;
    return it->second;
  }

  void collect_due() {
    due_.clear();
    ++epoch_;
    for (NodeIndex v : mail_) {
      if (!halted_[v] && stamp_[v] != epoch_) {
        stamp_[v] = epoch_;
        due_.push_back(v);
      }
    }
    mail_.clear();
    while (!queue_.empty() && queue_.top().round <= round_) {
      Wake w = queue_.top();
      queue_.pop();
      if (halted_[w.node] || wake_[w.node] != w.round) continue;
      if (stamp_[w.node] != epoch_) {
        stamp_[w.node] = epoch_;
        due_.push_back(w.node);
      }
    }
    std::sort(due_.begin(), due_.end());
  }

  std::uint64_t next_wake() {
    while (!queue_.empty()) {
      const Wake& w = queue_.top();
      if (halted_[w.node] || wake_[w.node] != w.round) {
        queue_.pop();
        continue;
      }
      return w.round;
    }
    return kNever;
  }

  std::string_view scheduled_label(std::uint64_t r) const {
    std::string_view label = config_.phase_starts.front().second;
    for (const auto& [start, name] : config_.phase_starts) {
      if (start > r) break;
      label = name;
    }
    return label;
  }

  void advance_silent(std::uint64_t rounds) {
    const std::uint64_t end = round_ + rounds;
    if (config_.phase_starts.empty()) {
      if (current_metrics_ == nullptr) current_metrics_ = &phase_metrics(current_phase_);
      current_metrics_->rounds += rounds;
    } else {
      std::uint64_t r = round_;
      while (r < end) {
        std::uint64_t next = end;
        for (const auto& entry : config_.phase_starts) {
          if (entry.first > r) {
            next = std::min(next, entry.first);
            break;
          }
        }
        phase_metrics(scheduled_label(r)).rounds += next - r;
        r = next;
      }
    }
    round_ = end;
    metrics_.rounds_executed = round_;
    metrics_.accounted_rounds += rounds;
  }

  const PortGraph& graph_;
  RunConfig config_;
  std::vector<A> nodes_;
  std::vector<std::optional<LinkPayload>> inbox_, outbox_;
  std::vector<std::size_t> route_;
  std::vector<NodeIndex> owner_;
  std::vector<std::uint64_t> wake_;
  std::vector<bool> halted_, has_mail_;
  std::vector<std::uint64_t> stamp_;
  std::uint64_t epoch_ = 0;
  std::vector<NodeIndex> mail_, due_;
  std::priority_queue<Wake, std::vector<Wake>, std::greater<>> queue_;
  std::size_t halted_count_ = 0;
  std::uint64_t round_ = 0;
  std::string_view current_phase_ = "main";
  PhaseMetrics* current_metrics_ = nullptr;
  bool finished_ = false;
  bool finalized_ = false;
  bool stop_ = false;
  RunMetrics metrics_;
};

/// Runs to completion: all automata halted, or max_rounds reached.
template <NodeAutomaton A>
RunMetrics run(const PortGraph& graph, const typename Simulation<A>::Factory& factory,
               const RunConfig& config) {
  Simulation<A> sim(graph, factory, config);
  return sim.run();
}

/// messages <= rounds * 2m and framed bits <= messages * max budget.
std::vector<std::string> check_accounting(const RunMetrics& metrics, std::size_t edge_count);

}  // namespace anonle::sim
