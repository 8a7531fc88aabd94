#include "anonle/known_n.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "anonle/errors.hpp"

namespace anonle::known_n {

namespace {

constexpr std::string_view kBroadcast = "broadcast";
constexpr std::string_view kWalkPhase = "walk";
constexpr std::string_view kConvergecastPhase = "convergecast";
constexpr std::string_view kDecision = "decision";

std::uint64_t ceil_tolerant(double v) {
  // Products like 8 * 4 * 0.25 must not round up because of representation noise.
  return static_cast<std::uint64_t>(std::ceil(v - 1e-9));
}

std::uint64_t checked_pow4(std::uint64_t n) {
  if (n >= (1ull << 16)) throw InvalidParameter("n_known too large: n^4 must fit in 64 bits");
  return n * n * n * n;
}

}  // namespace

std::uint64_t choose_x(std::uint64_t n, double phi, std::uint64_t t_mix, double x_multiplier) {
  if (n == 0 || t_mix == 0 || !(phi > 0.0) || !(x_multiplier > 0.0)) {
    throw InvalidParameter("choose_x: all inputs must be positive");
  }
  const double logn = static_cast<double>(sim::ceil_log2(n));
  const double x = x_multiplier * std::sqrt(static_cast<double>(n) * logn / (phi * static_cast<double>(t_mix)));
  return std::max<std::uint64_t>(1, ceil_tolerant(x));
}

KnownNParams make_params(std::uint64_t n_known, double phi, std::uint64_t t_mix, std::uint32_t c,
                         double x_multiplier, std::optional<std::uint64_t> x) {
  if (n_known == 0) throw InvalidParameter("n_known must be >= 1");
  if (!(phi > 0.0) || phi > 1.0) throw InvalidParameter("phi must lie in (0, 1]");
  if (t_mix == 0) throw InvalidParameter("t_mix must be >= 1");
  if (c == 0) throw InvalidParameter("c must be >= 1");
  if (!(x_multiplier > 0.0)) throw InvalidParameter("x_multiplier must be positive");
  KnownNParams p;
  p.n_known = n_known;
  p.phi = phi;
  p.t_mix = t_mix;
  p.c = c;
  p.x_multiplier = x_multiplier;
  p.log_n = sim::ceil_log2(n_known);
  p.x = x ? *x : choose_x(n_known, phi, t_mix, x_multiplier);
  if (p.x == 0) throw InvalidParameter("x must be >= 1");
  p.id_space_max = checked_pow4(n_known);
  const double nk = static_cast<double>(n_known);
  p.candidate_prob = n_known == 1 ? 1.0 : std::min(1.0, c * std::log(nk) / nk);
  p.superround_width = std::max<std::uint32_t>(1, 4 * c * p.log_n);
  p.walk_length = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(c) * t_mix * p.log_n);
  p.territory_cap =
      std::max<std::uint64_t>(1, ceil_tolerant(static_cast<double>(p.x) * t_mix * phi));
  validate(p);
  return p;
}

void validate(const KnownNParams& p) {
  if (p.x < 1 || p.walk_length < 1 || p.territory_cap < 1) {
    throw InvalidParameter("x, walk_length and territory_cap must be >= 1");
  }
  if (!(p.candidate_prob > 0.0) || p.candidate_prob > 1.0) {
    throw InvalidParameter("candidate_prob must lie in (0, 1]");
  }
  if (p.superround_width < 1) throw InvalidParameter("superround_width must be >= 1");
  if (p.superround_width > 4096) throw InvalidParameter("superround_width above 4096 slots");
}

nlohmann::json KnownNParams::to_json() const {
  return {{"n_known", n_known},
          {"t_mix", t_mix},
          {"phi", phi},
          {"c", c},
          {"x_multiplier", x_multiplier},
          {"x", x},
          {"log_n", log_n},
          {"id_space_max", id_space_max},
          {"candidate_prob", candidate_prob},
          {"superround_width", superround_width},
          {"walk_length", walk_length},
          {"territory_cap", territory_cap},
          {"strict_pseudocode", strict_pseudocode}};
}

Role sample_role(RngStream& rng, const KnownNParams& params) {
  Role role;
  role.id = rng.uniform(1, params.id_space_max);
  role.candidate = rng.bernoulli(params.candidate_prob);
  return role;
}

// ---------------------------------------------------------------------------

KnownNNode::KnownNNode(std::uint32_t degree, const KnownNParams* params, NodeRng rng,
                       std::optional<Role> forced_role)
    : degree_(degree),
      params_(params),
      broadcast_rng_(rng.stream("broadcast")),
      walk_rng_(rng.stream("walk")) {
  RngStream role_rng = rng.stream("role");
  role_ = sample_role(role_rng, *params);
  if (forced_role) role_ = *forced_role;
  if (params->n_known == 1) role_.candidate = true;
  slot_used_.assign(params->superround_width, 0);
  id_width_ = sim::bits_for(params->id_space_max);
  size_max_ = (1ull << (sim::bits_for(std::max(params->n_known, params->territory_cap)) + 3)) - 1;
  size_width_ = sim::bits_for(size_max_);
  count_width_ = static_cast<std::uint8_t>(
      sim::ceil_log2(static_cast<std::uint64_t>(params->superround_width) * params->x + 1) + 2);
  port_counts_.assign(degree_, 0);
  if (params->strict_pseudocode) id_max_ = role_.id;
  if (role_.candidate && params->n_known > 1) {
    Thread& t = new_thread(role_.id, 0);
    t.is_source = true;
    t.informed = true;
    t.status = SearchStatus::active;
  }
}

Thread& KnownNNode::new_thread(std::uint64_t source_id, std::uint32_t slot) {
  Thread t;
  t.source_id = source_id;
  t.slot = slot;
  slot_used_[slot] = 1;
  t.child_size.assign(degree_, 0);
  t.child_status.assign(degree_, SearchStatus::passive);
  t.is_child.assign(degree_, 0);
  t.stop_from.assign(degree_, 0);
  t.avail.resize(degree_);
  t.avail_pos.resize(degree_);
  for (Port p = 1; p <= degree_; ++p) {
    t.avail[p - 1] = p;
    t.avail_pos[p - 1] = p;
  }
  threads_.push_back(std::move(t));
  return threads_.back();
}

Thread* KnownNNode::thread_by_id(std::uint64_t source_id) {
  for (Thread& t : threads_) {
    if (t.source_id == source_id) return &t;
  }
  return nullptr;
}

const Thread* KnownNNode::find_thread(std::uint64_t source_id) const {
  for (const Thread& t : threads_) {
    if (t.source_id == source_id) return &t;
  }
  return nullptr;
}

void KnownNNode::remove_avail(Thread& t, Port p) {
  const std::uint32_t pos = t.avail_pos[p - 1];
  if (pos == 0) return;
  const Port last = t.avail.back();
  t.avail[pos - 1] = last;
  t.avail_pos[last - 1] = pos;
  t.avail.pop_back();
  t.avail_pos[p - 1] = 0;
}

sim::LinkPayload KnownNNode::thread_message(std::uint8_t kind, std::uint64_t source_id,
                                            std::uint64_t value) const {
  sim::LinkPayload msg(kind);
  msg.add(source_id, id_width_);
  if (kind == kSize) msg.add(std::min(value, size_max_), size_width_);
  return msg;
}

void KnownNNode::buffer_broadcast_mail(std::uint64_t round, sim::Inbox inbox) {
  const std::uint64_t sent_super = (round - 1) / params_->superround_width;
  for (Port p = 1; p <= degree_; ++p) {
    const auto& msg = inbox[p - 1];
    if (!msg) continue;
    const std::uint64_t source = msg->field(0);
    const std::uint64_t value = msg->field_count() > 1 ? msg->field(1) : 0;
    if (Thread* t = thread_by_id(source)) {
      t->inbox.push_back({p, msg->kind(), value, sent_super});
    } else if (msg->kind() == kOffer) {
      unknown_offers_.push_back({source, p, sent_super});
    } else {
      throw std::logic_error("protocol corruption: control message for a thread this node never joined");
    }
  }
}

void KnownNNode::admit_new_threads(std::uint64_t super) {
  if (unknown_offers_.empty()) return;
  std::vector<Offer> keep;
  std::vector<std::uint64_t> ids;
  for (const Offer& o : unknown_offers_) {
    if (o.sent_super < super) {
      ids.push_back(o.source_id);
    } else {
      keep.push_back(o);
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (std::uint64_t id : ids) {
    std::uint32_t slot = 0;
    while (slot < slot_used_.size() && slot_used_[slot]) ++slot;
    if (slot == slot_used_.size()) {
      dropped_ = true;
      continue;
    }
    Thread& t = new_thread(id, slot);
    for (const Offer& o : unknown_offers_) {
      if (o.source_id == id && o.sent_super < super) t.inbox.push_back({o.port, kOffer, 0, o.sent_super});
    }
  }
  unknown_offers_ = std::move(keep);
}

void KnownNNode::send_stop(Thread& t, sim::Outbox outbox) {
  for (Port p = 1; p <= degree_; ++p) {
    if (t.is_child[p - 1] && !t.stop_from[p - 1]) {
      outbox[p - 1] = thread_message(kStop, t.source_id, 0);
      t.child_status[p - 1] = SearchStatus::stop;
    }
  }
  if (!t.is_source && t.parent != 0 && !t.stop_from[t.parent - 1]) {
    outbox[t.parent - 1] = thread_message(kStop, t.source_id, 0);
  }
  t.stop_sent = true;
}

void KnownNNode::thread_step(Thread& t, std::uint64_t super, sim::Outbox outbox) {
  // Receptions from the previous super-round, in port order.
  std::vector<Thread::Pending> now;
  std::vector<Thread::Pending> later;
  for (const auto& m : t.inbox) (m.sent_super < super ? now : later).push_back(m);
  t.inbox = std::move(later);
  std::sort(now.begin(), now.end(), [](const auto& a, const auto& b) { return a.port < b.port; });
  for (const auto& m : now) {
    switch (m.kind) {
      case kStop:
        t.status = SearchStatus::stop;
        t.stop_from[m.port - 1] = 1;
        break;
      case kActivate:
        if (m.port == t.parent && t.status != SearchStatus::stop) t.status = SearchStatus::active;
        break;
      case kDeactivate:
        if (m.port == t.parent && t.status != SearchStatus::stop) t.status = SearchStatus::passive;
        break;
      case kOffer:
        if (!t.informed) {
          t.informed = true;
          t.parent = m.port;
          t.status = SearchStatus::active;
        }
        remove_avail(t, m.port);
        break;
      case kSize:
        if (!t.is_child[m.port - 1]) {
          t.is_child[m.port - 1] = 1;
          t.confirmed += m.value;
        } else {
          t.confirmed = t.confirmed - t.child_size[m.port - 1] + m.value;
        }
        t.child_size[m.port - 1] = m.value;
        t.child_status[m.port - 1] = SearchStatus::passive;
        remove_avail(t, m.port);
        break;
      default:
        throw std::logic_error("unexpected message kind in broadcast phase");
    }
  }
  if (!t.informed) return;

  if (t.status == SearchStatus::stop) {
    if (!t.stop_sent) send_stop(t, outbox);
    return;
  }
  const std::uint64_t cap = params_->territory_cap;
  if (t.confirmed >= cap || t.threshold >= cap) {
    t.status = SearchStatus::stop;
    send_stop(t, outbox);
    return;
  }

  auto set_children = [&](SearchStatus target, std::uint8_t kind) {
    for (Port p = 1; p <= degree_; ++p) {
      if (t.is_child[p - 1] && t.child_status[p - 1] != target) {
        outbox[p - 1] = thread_message(kind, t.source_id, 0);
        t.child_status[p - 1] = target;
      }
    }
  };
  auto probe = [&] {
    if (t.avail.empty()) return;
    const Port p = t.avail[broadcast_rng_.index(t.avail.size())];
    remove_avail(t, p);
    outbox[p - 1] = thread_message(kOffer, t.source_id, 0);
  };

  if (t.confirmed >= t.threshold) {
    if (!t.is_source) outbox[t.parent - 1] = thread_message(kSize, t.source_id, t.confirmed);
    while (t.threshold <= t.confirmed) t.threshold *= 2;
    if (!t.is_source) t.status = SearchStatus::passive;
    set_children(SearchStatus::passive, kDeactivate);
  } else if (t.is_source || t.status == SearchStatus::active) {
    set_children(SearchStatus::active, kActivate);
    probe();
  } else {
    set_children(SearchStatus::passive, kDeactivate);
  }
}

bool KnownNNode::has_work(const Thread& t) const {
  if (!t.informed) return false;
  if (t.status == SearchStatus::stop) return !t.stop_sent;
  const std::uint64_t cap = params_->territory_cap;
  if (t.confirmed >= cap || t.threshold >= cap || t.confirmed >= t.threshold) return true;
  const bool active = t.is_source || t.status == SearchStatus::active;
  const SearchStatus target = active ? SearchStatus::active : SearchStatus::passive;
  for (Port p = 1; p <= degree_; ++p) {
    if (t.is_child[p - 1] && t.child_status[p - 1] != target) return true;
  }
  return active && !t.avail.empty();
}

std::uint64_t KnownNNode::next_thread_round(const Thread& t, std::uint64_t round) const {
  const std::uint64_t w = params_->superround_width;
  std::uint64_t earliest_super = round / w;
  if (earliest_super * w + t.slot <= round) ++earliest_super;
  bool wanted = has_work(t);
  for (const auto& m : t.inbox) {
    wanted = true;
    earliest_super = std::max(earliest_super, m.sent_super + 1);
  }
  return wanted ? earliest_super * w + t.slot : sim::kNever;
}

std::uint64_t KnownNNode::after_broadcast_wake() const {
  if (role_.candidate) return params_->walk_start();
  for (const Thread& t : threads_) {
    if (t.informed && !t.is_source) return params_->convergecast_start();
  }
  return params_->decision_round();
}

std::uint64_t KnownNNode::broadcast_wake(std::uint64_t round) const {
  std::uint64_t wake = after_broadcast_wake();
  for (const Thread& t : threads_) wake = std::min(wake, next_thread_round(t, round));
  const std::uint64_t w = params_->superround_width;
  for (const Offer& o : unknown_offers_) wake = std::min(wake, (o.sent_super + 1) * w);
  return std::min(wake, std::max(params_->walk_start(), round + 1));
}

void KnownNNode::fold_walks(sim::Inbox inbox) {
  for (const auto& msg : inbox) {
    if (!msg || msg->kind() != kWalk) continue;
    id_max_ = std::max(id_max_, msg->field(0));
    resident_ += msg->field(1);
  }
}

void KnownNNode::move_tokens(sim::Outbox outbox) {
  std::fill(port_counts_.begin(), port_counts_.end(), 0);
  std::uint64_t moved = 0;
  for (std::uint64_t i = 0; i < resident_; ++i) {
    if (walk_rng_.bernoulli(0.5)) {
      ++port_counts_[walk_rng_.index(degree_)];
      ++moved;
    }
  }
  resident_ -= moved;
  for (Port p = 1; p <= degree_; ++p) {
    if (port_counts_[p - 1] == 0) continue;
    sim::LinkPayload msg(kWalk);
    msg.add(id_max_, id_width_).add(port_counts_[p - 1], count_width_);
    outbox[p - 1] = std::move(msg);
  }
}

void KnownNNode::fold_convergecast(sim::Inbox inbox) {
  for (const auto& msg : inbox) {
    if (msg && msg->kind() == kConvergecast) id_max_ = std::max(id_max_, msg->field(0));
  }
}

sim::StepResult KnownNNode::step(std::uint64_t round, sim::Inbox inbox, sim::Outbox outbox) {
  const KnownNParams& P = *params_;
  sim::StepResult res;
  res.size_scale = P.n_known;
  if (P.n_known == 1) {
    leader_ = true;
    id_max_ = role_.id;
    res.halted = true;
    res.phase = kDecision;
    return res;
  }

  const std::uint64_t walk_start = P.walk_start();
  const std::uint64_t conv_start = P.convergecast_start();
  const std::uint64_t decide = P.decision_round();

  if (round < walk_start) {
    res.phase = kBroadcast;
    if (round > 0) buffer_broadcast_mail(round, inbox);
    const std::uint64_t w = P.superround_width;
    const std::uint64_t super = round / w;
    const std::uint64_t slot = round % w;
    if (slot == 0) admit_new_threads(super);
    for (Thread& t : threads_) {
      if (t.slot == slot) {
        thread_step(t, super, outbox);
        break;
      }
    }
    res.idle_until = broadcast_wake(round);
    return res;
  }

  if (round < conv_start) {
    res.phase = kWalkPhase;
    if (round == walk_start) {
      if (role_.candidate) {
        id_max_ = role_.id;
        // Initial placement: every token leaves through a uniform port.
        std::fill(port_counts_.begin(), port_counts_.end(), 0);
        for (std::uint64_t i = 0; i < P.x; ++i) ++port_counts_[walk_rng_.index(degree_)];
        for (Port p = 1; p <= degree_; ++p) {
          if (port_counts_[p - 1] == 0) continue;
          sim::LinkPayload msg(kWalk);
          msg.add(id_max_, id_width_).add(port_counts_[p - 1], count_width_);
          outbox[p - 1] = std::move(msg);
        }
      }
    } else {
      fold_walks(inbox);
      move_tokens(outbox);
    }
    if (resident_ > 0) {
      res.idle_until = round + 1;
    } else {
      bool has_parent = false;
      for (const Thread& t : threads_) has_parent |= (t.informed && !t.is_source);
      res.idle_until = has_parent ? conv_start : decide;
    }
    return res;
  }

  if (round < decide) {
    res.phase = kConvergecastPhase;
    fold_walks(inbox);
    fold_convergecast(inbox);
    if (id_max_ > last_sent_ && id_max_ > 0) {
      for (const Thread& t : threads_) {
        if (!t.informed || t.is_source) continue;
        auto& slot = outbox[t.parent - 1];
        if (!slot) {
          sim::LinkPayload msg(kConvergecast);
          msg.add(id_max_, id_width_);
          slot = std::move(msg);
        }
      }
      last_sent_ = id_max_;
    }
    res.idle_until = decide;
    return res;
  }

  res.phase = kDecision;
  fold_walks(inbox);
  fold_convergecast(inbox);
  leader_ = (P.strict_pseudocode || role_.candidate) && role_.id == id_max_;
  res.halted = true;
  return res;
}

nlohmann::json KnownNNode::observe() const {
  nlohmann::json threads = nlohmann::json::array();
  for (const Thread& t : threads_) {
    threads.push_back({{"source", t.source_id},
                       {"informed", t.informed},
                       {"parent", t.parent},
                       {"confirmed", t.confirmed},
                       {"threshold", t.threshold},
                       {"status", static_cast<int>(t.status)}});
  }
  return {{"candidate", role_.candidate},
          {"id", role_.id},
          {"id_max", id_max_},
          {"resident", resident_},
          {"leader", leader_},
          {"threads", threads}};
}

// ---------------------------------------------------------------------------

std::optional<std::string> check_tree(const PortGraph& graph, std::span<const KnownNNode> nodes,
                                      std::uint64_t source_id) {
  const std::size_t n = graph.node_count();
  std::vector<std::int64_t> parent(n, -2);  // -2 uninformed, -1 root
  std::size_t roots = 0;
  for (NodeIndex v = 0; v < n; ++v) {
    const Thread* t = nodes[v].find_thread(source_id);
    if (!t || !t->informed) continue;
    if (t->is_source) {
      parent[v] = -1;
      ++roots;
    } else {
      parent[v] = graph.port(v, t->parent).neighbor;
    }
  }
  if (roots != 1) return "thread " + std::to_string(source_id) + " has " + std::to_string(roots) + " roots";
  for (NodeIndex v = 0; v < n; ++v) {
    if (parent[v] < 0) continue;
    // Follow parents; more than n steps means a cycle.
    std::int64_t u = v;
    std::size_t steps = 0;
    while (u >= 0 && parent[u] >= 0) {
      u = parent[u];
      if (++steps > n) return "thread " + std::to_string(source_id) + " has a parent cycle";
    }
    if (u < 0 || parent[u] != -1) {
      return "thread " + std::to_string(source_id) + ": node " + std::to_string(v) +
             " has a parent outside the tree";
    }
  }
  return std::nullopt;
}

std::vector<std::string> ElectionOutcome::flags() const {
  std::vector<std::string> f;
  if (zero_candidates) f.emplace_back("zero_candidates");
  if (no_leader) f.emplace_back("no_leader");
  if (multiple_leaders) f.emplace_back("multiple_leaders");
  if (duplicate_id) f.emplace_back("duplicate_id");
  if (multiplex_overflow) f.emplace_back("multiplex_overflow");
  if (!invariant_violations.empty()) f.emplace_back("invariant_violation");
  return f;
}

nlohmann::json ElectionOutcome::to_json() const {
  nlohmann::json phases = metrics.to_json()["phases"];
  nlohmann::json territories = nlohmann::json::object();
  for (const auto& [id, size] : territory_sizes) {
    territories[std::to_string(id)] = {{"informed", size},
                                       {"confirmed", source_confirmed.at(id)},
                                       {"walk_hit", walk_hit.at(id)}};
  }
  return {{"leaders", leaders},
          {"candidates", candidates.size()},
          {"candidate_ids", candidate_ids},
          {"global_max_id", global_max_id},
          {"phases", phases},
          {"flags", flags()},
          {"territories", territories},
          {"messages", metrics.messages_sent},
          {"bits", metrics.bits_sent},
          {"rounds", metrics.rounds_executed},
          {"invariant_violations", invariant_violations}};
}

namespace {

struct InvariantWatch {
  const KnownNParams& params;
  std::vector<std::uint64_t> last_max;
  std::uint64_t tokens_expected = 0;
  bool tree_checked = false;
  ElectionOutcome& out;

  void add(std::string what) {
    if (out.invariant_violations.size() < 50) out.invariant_violations.push_back(std::move(what));
  }

  template <typename Sim>
  void operator()(std::uint64_t round, Sim& sim) {
    const PortGraph& g = sim.graph();
    const std::size_t n = g.node_count();
    std::map<std::uint64_t, std::uint64_t> informed;
    for (NodeIndex v = 0; v < n; ++v) {
      const KnownNNode& node = sim.node(v);
      if (node.id_max() < last_max[v]) {
        add("round " + std::to_string(round) + ": id_max decreased at node " + std::to_string(v));
      }
      last_max[v] = node.id_max();
      for (const Thread& t : node.threads()) {
        if (t.informed) ++informed[t.source_id];
        if (t.is_source) {
          out.max_source_confirmed_seen = std::max(out.max_source_confirmed_seen, t.confirmed);
          if (t.confirmed > 2 * params.territory_cap) {
            add("round " + std::to_string(round) + ": source confirmed count above 2 * cap");
          }
        }
      }
    }
    for (const auto& [id, count] : informed) {
      out.max_informed_seen = std::max(out.max_informed_seen, count);
      if (count > params.informed_slack * params.territory_cap) {
        add("round " + std::to_string(round) + ": thread " + std::to_string(id) +
            " informed count above slack * cap");
      }
    }
    if (!tree_checked && round + 1 >= params.walk_start()) {
      tree_checked = true;
      std::map<std::uint64_t, std::uint32_t> sources;
      for (NodeIndex v = 0; v < n; ++v) {
        if (sim.node(v).candidate()) ++sources[sim.node(v).id()];
      }
      for (const auto& [id, count] : informed) {
        // Two candidates sharing an id run one merged thread; that case is
        // reported through the duplicate_id flag instead.
        if (sources[id] > 1) continue;
        if (auto problem = check_tree(g, sim.nodes(), id)) add(*problem);
      }
    }
    if (round >= params.walk_start() && round < params.convergecast_start()) {
      std::uint64_t tokens = 0;
      for (NodeIndex v = 0; v < n; ++v) {
        tokens += sim.node(v).resident_tokens();
        for (const auto& msg : sim.pending_mail(v)) {
          if (msg && msg->kind() == kWalk) {
            tokens += msg->field(1);
            if (msg->field_count() != 2) add("walk payload without exactly one (id, count) pair");
          }
        }
      }
      if (tokens != tokens_expected) {
        add("round " + std::to_string(round) + ": token count " + std::to_string(tokens) +
            " differs from " + std::to_string(tokens_expected));
      }
    }
  }
};

}  // namespace

ElectionOutcome elect_known_n(const PortGraph& graph, const KnownNParams& params,
                              const ElectionOptions& options) {
  validate(params);
  const std::size_t n = graph.node_count();
  if (!options.forced_roles.empty() && options.forced_roles.size() != n) {
    throw InvalidParameter("forced_roles must have one entry per node");
  }
  sim::RunConfig config = options.run;
  const std::uint64_t total = params.n_known == 1 ? 1 : params.decision_round() + 1;
  config.max_rounds = std::max(config.max_rounds, total);
  if (params.n_known > 1 && config.phase_starts.empty()) {
    config.phase_starts = {{0, std::string(kBroadcast)},
                           {params.walk_start(), std::string(kWalkPhase)},
                           {params.convergecast_start(), std::string(kConvergecastPhase)},
                           {params.decision_round(), std::string(kDecision)}};
  }

  NodeIndex next_index = 0;  // the engine builds nodes in index order
  auto factory = [&](std::uint32_t degree, NodeRng rng) {
    std::optional<Role> forced;
    if (!options.forced_roles.empty()) forced = options.forced_roles[next_index];
    ++next_index;
    return KnownNNode(degree, &params, rng, forced);
  };
  sim::Simulation<KnownNNode> sim(graph, factory, config);

  ElectionOutcome out;
  for (NodeIndex v = 0; v < n; ++v) {
    const KnownNNode& node = sim.node(v);
    if (!node.candidate()) continue;
    out.candidates.push_back(v);
    out.candidate_ids.push_back(node.id());
  }

  if (options.check_invariants) {
    InvariantWatch watch{params, std::vector<std::uint64_t>(n, 0), out.candidates.size() * params.x,
                         false, out};
    out.metrics = sim.run([&](std::uint64_t round, sim::Simulation<KnownNNode>& s) { watch(round, s); });
  } else {
    out.metrics = sim.run();
  }

  std::uint64_t global_max = 0;
  for (NodeIndex v = 0; v < n; ++v) global_max = std::max(global_max, sim.node(v).id_max());
  out.global_max_id = global_max;
  for (NodeIndex v = 0; v < n; ++v) {
    const KnownNNode& node = sim.node(v);
    if (node.leader()) out.leaders.push_back(v);
    for (const Thread& t : node.threads()) {
      if (!t.informed) continue;
      ++out.territory_sizes[t.source_id];
      if (t.is_source) out.source_confirmed[t.source_id] = t.confirmed;
      out.walk_hit.try_emplace(t.source_id, false);
      if (node.id_max() == global_max && global_max != 0) out.walk_hit[t.source_id] = true;
    }
  }
  for (const auto& [id, size] : out.territory_sizes) out.source_confirmed.try_emplace(id, 0);

  out.zero_candidates = out.candidates.empty();
  out.no_leader = out.leaders.empty();
  out.multiple_leaders = out.leaders.size() > 1;
  std::set<std::uint64_t> distinct(out.candidate_ids.begin(), out.candidate_ids.end());
  out.duplicate_id = distinct.size() != out.candidate_ids.size();
  out.multiplex_overflow = out.candidates.size() > params.superround_width;
  for (const auto& problem : sim::check_accounting(out.metrics, graph.edge_count())) {
    out.invariant_violations.push_back(problem);
  }

  out.metrics.outcome = {{"leaders", out.leaders},
                         {"candidates", out.candidates.size()},
                         {"flags", out.flags()}};
  return out;
}

}  // namespace anonle::known_n
