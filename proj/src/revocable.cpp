#include "anonle/revocable.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "anonle/errors.hpp"

namespace anonle::revocable {

namespace {

constexpr std::uint8_t kDiffusionMsg = 1;
constexpr std::uint8_t kDisseminationMsg = 2;
constexpr std::uint8_t kExponentWidth = 6;

std::uint64_t ceil_tolerant(long double v) {
  return static_cast<std::uint64_t>(std::ceil(v - 1e-9L));
}

bool is_power_of_two(std::uint64_t k) { return k != 0 && (k & (k - 1)) == 0; }

std::uint64_t exponent_of(std::uint64_t K) {
  return K == 0 ? 0 : static_cast<std::uint64_t>(std::countr_zero(K));
}

}  // namespace

// --- schedule ---------------------------------------------------------------

std::optional<std::uint64_t> ScheduleParams::integral_denominator() const {
  const double two_s = 2.0 * s;
  if (two_s == std::floor(two_s) && two_s < 9.0e15) return static_cast<std::uint64_t>(two_s);
  return std::nullopt;
}

nlohmann::json ScheduleParams::to_json() const {
  nlohmann::json j{{"k", k},
                   {"epsilon", epsilon},
                   {"xi", xi},
                   {"s", s},
                   {"r_formula", r_formula},
                   {"f_formula", f_formula},
                   {"r_k", r_k},
                   {"f_k", f_k},
                   {"p_k", p_k},
                   {"tau_k", tau_k},
                   {"id_range_max", id_range_max},
                   {"share", share},
                   {"r_scale", r_scale},
                   {"f_scale", f_scale},
                   {"r_form", i_G ? "isoperimetric" : "size_only"}};
  if (i_G) j["i_G"] = *i_G;
  if (tau_exact) j["tau_exact"] = to_string(*tau_exact);
  return j;
}

ScheduleParams schedule(std::uint64_t k, double epsilon, double xi, std::optional<double> i_G,
                        double r_scale, double f_scale) {
  if (k < 2 || !is_power_of_two(k)) throw InvalidParameter("k must be a power of two >= 2");
  if (!(epsilon > 0.0) || epsilon > 1.0) throw InvalidParameter("epsilon must lie in (0, 1]");
  if (!(xi > 0.0) || !(xi < 1.0)) throw InvalidParameter("xi must lie in (0, 1)");
  if (!(r_scale > 0.0) || !(f_scale > 0.0)) throw InvalidParameter("scales must be positive");
  ScheduleParams p;
  p.k = k;
  p.epsilon = epsilon;
  p.xi = xi;
  p.i_G = i_G;
  p.r_scale = r_scale;
  p.f_scale = f_scale;

  const long double kl = static_cast<long double>(k);
  const long double s = std::pow(kl, 1.0L + epsilon);
  if (i_G && (!(*i_G > 0.0) || *i_G > static_cast<double>(s))) {
    throw InvalidParameter("i_G must lie in (0, k^(1+eps)]");
  }
  p.s = static_cast<double>(s);
  p.dissemination = ceil_tolerant(s);

  const long double log_s2 = std::log2(s * s);
  long double first = 0;
  if (i_G) {
    const long double i = *i_G;
    first = 8.0L * s * s / (i * i) * log_s2;
  } else {
    first = 2.0L * std::pow(kl, 2.0L * (2.0L + epsilon)) * log_s2;
  }
  const long double second = s * std::log2(2.0L * kl);
  p.r_formula = ceil_tolerant(first) + ceil_tolerant(second);

  const long double sqrt2 = std::numbers::sqrt2_v<long double>;
  const long double f_const = 4.0L * sqrt2 / ((sqrt2 - 1.0L) * (sqrt2 - 1.0L));
  p.f_formula = std::max<std::uint64_t>(1, ceil_tolerant(f_const * std::log(s / xi)));

  p.r_k = std::max<std::uint64_t>(1, ceil_tolerant(static_cast<long double>(p.r_formula) * r_scale));
  p.f_k = std::max<std::uint64_t>(1, ceil_tolerant(static_cast<long double>(p.f_formula) * f_scale));

  p.p_k = std::min(1.0, std::numbers::ln2 / p.s);
  p.tau_k = 1.0 - 1.0 / (p.s - 1.0);
  if (p.s == std::floor(p.s) && p.s >= 2.0 && p.s < 4.0e18) {
    const auto si = static_cast<std::int64_t>(p.s);
    p.tau_exact = Rational(si - 2, si - 1);
  }

  const long double range = std::ceil(std::pow(kl, 4.0L * (1.0L + epsilon)) - 1e-9L);
  const long double lg = std::ceil(std::log2(4.0L * kl) - 1e-12L);
  const long double total = range * lg * lg * lg * lg;
  if (total > 4.0e18L) throw InvalidParameter("id range for this k does not fit in 64 bits");
  p.id_range_max = static_cast<std::uint64_t>(total);
  p.share = 1.0 / (2.0 * p.s);
  return p;
}

// --- potentials -------------------------------------------------------------

std::uint64_t share_denominator_q32(double s) {
  if (!(s > 0.0) || s > 2.0e9) throw InvalidParameter("k^(1+eps) outside the fixed-point range");
  return static_cast<std::uint64_t>(std::llround(2.0 * s * 4294967296.0));
}

Fixed fixed_update(Fixed self, Fixed neighbor_sum, std::uint32_t degree, std::uint64_t denom_q32) {
  using S = __int128;
  const S delta = static_cast<S>(neighbor_sum) - static_cast<S>(degree) * static_cast<S>(self);
  const S step = (delta << 32) / static_cast<S>(denom_q32);
  return static_cast<Fixed>(static_cast<S>(self) + step);
}

double to_double(Fixed v) {
  return static_cast<double>(static_cast<long double>(v) / static_cast<long double>(kFixedOne));
}

Fixed from_double(double v) {
  if (v <= 0.0) return 0;
  if (v >= 1.0) return kFixedOne;
  return static_cast<Fixed>(static_cast<long double>(v) * static_cast<long double>(kFixedOne));
}

ExactPotentials ExactPotentials::from_colors(const std::vector<bool>& white, std::uint64_t D) {
  ExactPotentials p;
  p.D = D;
  p.denominator = 1;
  p.numerators.reserve(white.size());
  for (bool w : white) p.numerators.emplace_back(w ? 0 : 1);
  return p;
}

mpq_class ExactPotentials::value(NodeIndex v) const {
  mpq_class q(numerators[v], denominator);
  q.canonicalize();
  return q;
}

mpq_class ExactPotentials::total() const {
  mpz_class sum = 0;
  for (const auto& x : numerators) sum += x;
  mpq_class q(sum, denominator);
  q.canonicalize();
  return q;
}

void diffusion_step(const PortGraph& g, ExactPotentials& p) {
  const std::size_t n = g.node_count();
  // Reused across calls so the limb storage is not reallocated every step.
  thread_local std::vector<mpz_class> next;
  next.resize(n);
  for (NodeIndex v = 0; v < n; ++v) {
    mpz_ptr acc = next[v].get_mpz_t();
    mpz_srcptr self = p.numerators[v].get_mpz_t();
    mpz_mul_ui(acc, self, p.D);
    for (const PortEnd& e : g.ports(v)) mpz_add(acc, acc, p.numerators[e.neighbor].get_mpz_t());
    mpz_submul_ui(acc, self, g.degree(v));
  }
  p.numerators.resize(n);
  for (NodeIndex v = 0; v < n; ++v) mpz_swap(p.numerators[v].get_mpz_t(), next[v].get_mpz_t());
  p.denominator *= p.D;
}

void diffusion_step(const PortGraph& g, std::vector<Fixed>& p, std::uint64_t denom_q32) {
  const std::size_t n = g.node_count();
  std::vector<Fixed> next(n);
  for (NodeIndex v = 0; v < n; ++v) {
    Fixed sum = 0;
    for (const PortEnd& e : g.ports(v)) sum += p[e.neighbor];
    next[v] = fixed_update(p[v], sum, g.degree(v), denom_q32);
  }
  p = std::move(next);
}

Rational diffusion_chain_conductance(const Rational& isoperimetric, std::uint64_t two_s) {
  return isoperimetric / Rational(static_cast<std::int64_t>(two_s));
}

// --- views and decisions ----------------------------------------------------

LeaderView fold_view(LeaderView mine, LeaderView theirs) {
  if (theirs.nil()) return mine;
  if (mine.nil()) return theirs;
  if (theirs.K > mine.K) return theirs;
  if (theirs.K == mine.K && theirs.id < mine.id) return theirs;
  return mine;
}

bool should_choose_id(bool has_id, std::span<const std::uint8_t> empty,
                      std::span<const std::uint8_t> probing) {
  if (has_id) return false;
  const auto empties = static_cast<std::uint64_t>(std::count(empty.begin(), empty.end(), 1));
  const auto probes = static_cast<std::uint64_t>(std::count(probing.begin(), probing.end(), 1));
  return 2 * empties > empty.size() && probes > 0;
}

// --- automaton ----------------------------------------------------------------

RevocableNode::RevocableNode(std::uint32_t degree, const NodeConfig* config, NodeRng rng)
    : degree_(degree),
      config_(config),
      color_rng_(rng.stream("color")),
      id_rng_(rng.stream("id")) {
  set_schedule(2);
}

void RevocableNode::set_schedule(std::uint64_t k) {
  sched_ = schedule(k, config_->epsilon, config_->xi, config_->i_G, config_->r_scale,
                    config_->f_scale);
  denom_q32_ = share_denominator_q32(sched_.s);
  if (config_->mode == PotentialMode::exact) {
    auto D = sched_.integral_denominator();
    if (!D) throw InvalidParameter("exact potentials need an integral 2 * k^(1+eps)");
    D_ = *D;
    if (!sched_.tau_exact) throw InvalidParameter("exact potentials need an integral k^(1+eps)");
  }
  log_D_ = sim::ceil_log2(static_cast<std::uint64_t>(std::ceil(2.0 * sched_.s)));
  surcharge_unit_ = log_D_;
  id_width_ = sim::bits_for(sched_.id_range_max);
  empty_.assign(sched_.f_k, 0);
  probing_.assign(sched_.f_k, 0);
  iter_ = 0;
}

double RevocableNode::potential() const {
  if (config_->mode == PotentialMode::exact) {
    mpq_class q(num_, den_);
    q.canonicalize();
    return q.get_d();
  }
  return to_double(pot_);
}

sim::LinkPayload RevocableNode::status_message(std::uint8_t kind) const {
  sim::LinkPayload msg(kind);
  msg.add(low_ ? 1 : 0, 1)
      .add(c_ ? 1 : 0, 1)
      .add(exponent_of(view_.K), kExponentWidth)
      .add(view_.id, id_width_);
  return msg;
}

void RevocableNode::start_iteration(sim::Outbox outbox, sim::StepResult& res) {
  white_ = color_rng_.bernoulli(sched_.p_k);
  c_ = white_;
  low_ = false;
  pot_ = white_ ? 0 : kFixedOne;
  if (config_->mode == PotentialMode::exact) {
    num_ = white_ ? 0 : 1;
    den_ = 1;
  }
  sim::LinkPayload msg = status_message(kDiffusionMsg);
  if (config_->mode == PotentialMode::exact) {
    const std::uint64_t limb = num_.get_ui();
    msg.set_serial(std::span<const std::uint64_t>(&limb, 1), 1);
  } else {
    const std::uint64_t limbs[2] = {static_cast<std::uint64_t>(pot_),
                                    static_cast<std::uint64_t>(pot_ >> 64)};
    msg.set_serial(limbs, 65);
  }
  for (auto& slot : outbox) slot = msg;
  res.surcharge_rounds = surcharge_unit_;
  res.phase = "diffusion";
}

void RevocableNode::diffusion_update(sim::Inbox inbox) {
  bool neighbors_probing = true;
  Fixed sum = 0;
  mpz_class exact_sum = 0;
  mpz_class tmp;
  for (const auto& msg : inbox) {
    if (!msg) throw std::logic_error("diffusion round without a neighbor message");
    if (msg->field(0) != 0) neighbors_probing = false;
    const auto limbs = msg->serial();
    if (config_->mode == PotentialMode::exact) {
      mpz_import(tmp.get_mpz_t(), limbs.size(), -1, sizeof(std::uint64_t), 0, 0, limbs.data());
      exact_sum += tmp;
    } else {
      sum += static_cast<Fixed>(limbs[0]) | (static_cast<Fixed>(limbs.size() > 1 ? limbs[1] : 0) << 64);
    }
    const std::uint64_t e = msg->field(2);
    view_ = fold_view(view_, {msg->field(3), e == 0 ? 0 : (1ull << e)});
  }
  const bool proceed = !low_ && static_cast<double>(degree_) <= sched_.s && neighbors_probing;
  if (!proceed && !low_) ++alarms_;
  if (config_->mode == PotentialMode::exact) {
    den_ *= D_;
    if (proceed) {
      num_ = num_ * D_ + exact_sum - num_ * degree_;
    } else {
      num_ = den_;
    }
  }
  if (proceed) {
    pot_ = fixed_update(pot_, sum, degree_, denom_q32_);
  } else {
    low_ = true;
    pot_ = kFixedOne;
  }
}

void RevocableNode::threshold_check() {
  bool above = false;
  if (config_->mode == PotentialMode::exact) {
    const Rational& t = *sched_.tau_exact;
    above = num_ * static_cast<unsigned long>(t.denominator()) >
            den_ * static_cast<unsigned long>(t.numerator());
  } else if (sched_.tau_exact) {
    const Rational& t = *sched_.tau_exact;
    above = pot_ * static_cast<Fixed>(t.denominator()) >
            static_cast<Fixed>(t.numerator()) * kFixedOne;
  } else {
    above = to_double(pot_) > sched_.tau_k;
  }
  if (above) {
    if (!low_) ++alarms_;
    low_ = true;
    pot_ = kFixedOne;
    if (config_->mode == PotentialMode::exact) num_ = den_;
  }
}

void RevocableNode::fold_status(sim::Inbox inbox, bool with_q_c) {
  for (const auto& msg : inbox) {
    if (!msg) continue;
    if (with_q_c) {
      if (msg->field(0) != 0) low_ = true;
      if (msg->field(1) != 0) c_ = true;
    }
    const std::uint64_t e = msg->field(2);
    view_ = fold_view(view_, {msg->field(3), e == 0 ? 0 : (1ull << e)});
  }
}

void RevocableNode::finish_iteration() {
  probing_[iter_] = low_ ? 0 : 1;
  empty_[iter_] = c_ ? 0 : 1;
  last_empty_ = !c_;
  last_probing_ = !low_;
  ++iter_;
  if (iter_ < sched_.f_k) return;
  if (should_choose_id(id_ != 0, empty_, probing_)) {
    id_ = id_rng_.uniform(1, sched_.id_range_max);
    K_ = sched_.k;
    view_ = {id_, K_};
  }
  leader_ = leader_predicate();
  if (sched_.k >= config_->k_limit) {
    halted_ = true;
    return;
  }
  set_schedule(sched_.k * 2);
}

sim::StepResult RevocableNode::step(std::uint64_t round, sim::Inbox inbox, sim::Outbox outbox) {
  sim::StepResult res;
  res.size_scale = sched_.dissemination;
  if (round == 0) {
    iter_start_ = 0;
    start_iteration(outbox, res);
    return res;
  }
  const std::uint64_t offset = round - iter_start_;
  const std::uint64_t r = sched_.r_k;
  if (offset == iteration_length()) {
    fold_status(inbox, true);
    finish_iteration();
    if (halted_) {
      res.halted = true;
      res.phase = "dissemination";
      return res;
    }
    res.size_scale = sched_.dissemination;
    iter_start_ = round;
    start_iteration(outbox, res);
    return res;
  }
  if (offset <= r) {
    res.phase = "diffusion";
    diffusion_update(inbox);
    if (offset < r) {
      sim::LinkPayload msg = status_message(kDiffusionMsg);
      if (config_->mode == PotentialMode::exact) {
        std::vector<std::uint64_t> limbs((mpz_sizeinbase(num_.get_mpz_t(), 2) + 63) / 64 + 1, 0);
        std::size_t count = 0;
        mpz_export(limbs.data(), &count, -1, sizeof(std::uint64_t), 0, 0, num_.get_mpz_t());
        limbs.resize(std::max<std::size_t>(count, 1));
        msg.set_serial(limbs, static_cast<std::uint32_t>(offset * log_D_ + 1));
      } else {
        const std::uint64_t limbs[2] = {static_cast<std::uint64_t>(pot_),
                                        static_cast<std::uint64_t>(pot_ >> 64)};
        msg.set_serial(limbs, 65);
      }
      for (auto& slot : outbox) slot = msg;
      res.surcharge_rounds = (offset + 1) * surcharge_unit_;
    } else {
      threshold_check();
      const sim::LinkPayload msg = status_message(kDisseminationMsg);
      for (auto& slot : outbox) slot = msg;
    }
    return res;
  }
  res.phase = "dissemination";
  fold_status(inbox, true);
  const sim::LinkPayload msg = status_message(kDisseminationMsg);
  for (auto& slot : outbox) slot = msg;
  return res;
}

nlohmann::json RevocableNode::observe() const {
  return {{"k", sched_.k},
          {"id", id_},
          {"K", K_},
          {"id_ldr", view_.id},
          {"K_ldr", view_.K},
          {"leader", leader_},
          {"low", low_},
          {"white_seen", c_},
          {"potential", potential()},
          {"alarms", alarms_}};
}

// --- runner -----------------------------------------------------------------

std::vector<std::uint64_t> k_sequence(std::size_t n, double epsilon,
                                      std::optional<std::uint64_t> max_k) {
  std::vector<std::uint64_t> ks;
  if (max_k) {
    if (*max_k < 2 || !is_power_of_two(*max_k)) throw InvalidParameter("max_k must be a power of two >= 2");
    for (std::uint64_t k = 2; k <= *max_k; k *= 2) ks.push_back(k);
    return ks;
  }
  std::uint64_t k = 2;
  while (std::pow(static_cast<double>(k), 1.0 + epsilon) <= 4.0 * static_cast<double>(n)) {
    ks.push_back(k);
    k *= 2;
  }
  ks.push_back(k);
  ks.push_back(2 * k);
  return ks;
}

std::uint64_t planned_rounds(std::size_t n, const RevocableConfig& config) {
  std::uint64_t total = 0;
  for (std::uint64_t k : k_sequence(n, config.epsilon, config.max_k)) {
    const ScheduleParams s =
        schedule(k, config.epsilon, config.xi, config.i_G, config.r_scale, config.f_scale);
    total += s.f_k * (s.r_k + s.dissemination);
  }
  return total + 1;
}

nlohmann::json RevocableOutcome::to_json() const {
  nlohmann::json snaps = nlohmann::json::array();
  for (const KSnapshot& s : per_k) {
    nlohmann::json j{{"k", s.k},
                     {"leaders", s.leaders},
                     {"ids_chosen", s.ids_chosen},
                     {"unanimous", s.unanimous},
                     {"whites_per_iter", s.whites_per_iter},
                     {"alarms", s.alarms},
                     {"rounds_logical", s.rounds_logical},
                     {"rounds_accounted", s.rounds_accounted},
                     {"messages", s.messages},
                     {"bits", s.bits},
                     {"revocations", s.revocations},
                     {"stable_within", s.stable_within},
                     {"schedule", s.schedule.to_json()}};
    if (s.unanimous) j["view"] = {{"id", s.view.id}, {"K", s.view.K}};
    snaps.push_back(std::move(j));
  }
  nlohmann::json views = nlohmann::json::array();
  for (const LeaderView& v : final_views) views.push_back({{"id", v.id}, {"K", v.K}});
  return {{"per_k", snaps},
          {"final_leaders", final_leaders},
          {"final_views", views},
          {"ids", ids},
          {"certificates", certificates},
          {"exactly_one_leader", exactly_one_leader},
          {"unanimous", unanimous},
          {"stabilized", stabilized},
          {"total_revocations", total_revocations},
          {"logical_rounds", logical_rounds},
          {"accounted_rounds", metrics.accounted_rounds},
          {"messages", metrics.messages_sent},
          {"bits", metrics.bits_sent},
          {"scaled", scaled},
          {"deviations", deviations}};
}

RevocableOutcome run_revocable(const PortGraph& graph, const RevocableConfig& config) {
  const std::size_t n = graph.node_count();
  const std::vector<std::uint64_t> ks = k_sequence(n, config.epsilon, config.max_k);

  NodeConfig node_config;
  node_config.epsilon = config.epsilon;
  node_config.xi = config.xi;
  node_config.i_G = config.i_G;
  node_config.r_scale = config.r_scale;
  node_config.f_scale = config.f_scale;
  node_config.mode = config.mode;
  node_config.k_limit = ks.back();

  // Iteration boundaries: the round at which iteration j of estimate k has
  // finished (and the next one has started).
  struct Boundary {
    std::uint64_t round;
    std::size_t k_index;
    std::uint64_t iteration;  // 1-based count of finished iterations of this k
  };
  std::vector<Boundary> boundaries;
  std::vector<ScheduleParams> schedules;
  std::vector<std::uint64_t> k_start;
  std::uint64_t cursor = 0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    schedules.push_back(schedule(ks[i], config.epsilon, config.xi, config.i_G, config.r_scale,
                                 config.f_scale));
    k_start.push_back(cursor);
    const std::uint64_t len = schedules.back().r_k + schedules.back().dissemination;
    for (std::uint64_t j = 1; j <= schedules.back().f_k; ++j) {
      boundaries.push_back({cursor + j * len, i, j});
    }
    cursor += schedules.back().f_k * len;
  }
  const std::uint64_t end_round = cursor;

  sim::RunConfig run = config.run;
  run.max_rounds = std::max(run.max_rounds, end_round + 1);

  auto factory = [&](std::uint32_t degree, NodeRng rng) {
    return RevocableNode(degree, &node_config, rng);
  };
  sim::Simulation<RevocableNode> sim(graph, factory, run);

  RevocableOutcome out;
  out.scaled = config.r_scale != 1.0 || config.f_scale != 1.0;
  if (out.scaled) {
    out.deviations.push_back({{"what", "scaled schedule"},
                              {"r_scale", config.r_scale},
                              {"f_scale", config.f_scale}});
  }
  out.per_k.resize(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    out.per_k[i].k = ks[i];
    out.per_k[i].schedule = schedules[i];
    out.per_k[i].stable_within = true;
    out.per_k[i].empty_iters_per_node.assign(n, 0);
  }

  std::vector<bool> prev_flag(n, false);
  std::vector<std::uint64_t> alarm_base(n, 0);
  sim::RunMetrics base;
  std::vector<LeaderView> ref_views;
  std::vector<bool> ref_pred;
  std::size_t next_boundary = 0;

  auto whites_now = [&](sim::Simulation<RevocableNode>& s) {
    std::uint64_t whites = 0;
    for (NodeIndex v = 0; v < n; ++v) whites += s.node(v).white() ? 1 : 0;
    return whites;
  };

  auto observer = [&](std::uint64_t round, sim::Simulation<RevocableNode>& s) {
    if (round == 0) {
      const std::uint64_t w = whites_now(s);
      out.per_k[0].whites_per_iter.push_back(w);
      s.metrics().whites_count.push_back(w);
      return;
    }
    if (next_boundary >= boundaries.size()) return;
    const Boundary& b = boundaries[next_boundary];
    if (round + 1 == b.round) {
      // Last round whose traffic belongs to the finishing estimate.
      if (b.iteration == schedules[b.k_index].f_k) {
        KSnapshot& snap = out.per_k[b.k_index];
        const sim::RunMetrics& m = s.metrics();
        snap.rounds_logical = m.rounds_executed - base.rounds_executed;
        snap.rounds_accounted = m.accounted_rounds - base.accounted_rounds;
        snap.messages = m.messages_sent - base.messages_sent;
        snap.bits = m.bits_sent - base.bits_sent;
        base = m;
      }
      return;
    }
    if (round != b.round) return;
    ++next_boundary;
    KSnapshot& snap = out.per_k[b.k_index];
    const bool last_iteration = b.iteration == schedules[b.k_index].f_k;

    std::vector<LeaderView> views(n);
    std::vector<bool> preds(n);
    for (NodeIndex v = 0; v < n; ++v) {
      if (s.node(v).last_empty()) ++snap.empty_iters_per_node[v];
      views[v] = s.node(v).view();
      preds[v] = s.node(v).leader_predicate();
    }
    if (b.iteration == 1) {
      ref_views = views;
      ref_pred = preds;
    } else if (views != ref_views || preds != ref_pred) {
      snap.stable_within = false;
    }

    if (last_iteration) {
      bool unanimous = n > 0 && !views[0].nil();
      for (NodeIndex v = 0; v < n; ++v) unanimous = unanimous && views[v] == views[0];
      snap.unanimous = unanimous;
      if (unanimous) snap.view = views[0];
      for (NodeIndex v = 0; v < n; ++v) {
        const RevocableNode& node = s.node(v);
        if (node.leader()) snap.leaders.push_back(v);
        if (node.K() == ks[b.k_index]) ++snap.ids_chosen;
        if (prev_flag[v] && !node.leader()) ++snap.revocations;
        prev_flag[v] = node.leader();
        snap.alarms += node.alarms() - alarm_base[v];
        alarm_base[v] = node.alarms();
      }
      if (snap.ids_chosen > 0) snap.stable_within = false;
      out.total_revocations += snap.revocations;
    }
    if (round < end_round) {
      const std::size_t k_index = last_iteration ? b.k_index + 1 : b.k_index;
      const std::uint64_t w = whites_now(s);
      out.per_k[k_index].whites_per_iter.push_back(w);
      s.metrics().whites_count.push_back(w);
    }
  };

  out.metrics = sim.run(observer);
  out.logical_rounds = out.metrics.rounds_executed;

  for (NodeIndex v = 0; v < n; ++v) {
    const RevocableNode& node = sim.node(v);
    if (node.leader()) out.final_leaders.push_back(v);
    out.final_views.push_back(node.view());
    out.ids.push_back(node.id());
    out.certificates.push_back(node.K());
  }
  out.exactly_one_leader = out.final_leaders.size() == 1;
  out.unanimous = !out.per_k.empty() && out.per_k.back().unanimous;
  out.stabilized = !out.per_k.empty() && out.per_k.back().stable_within;
  out.metrics.outcome = {{"leaders", out.final_leaders},
                         {"unanimous", out.unanimous},
                         {"stabilized", out.stabilized},
                         {"deviations", out.deviations}};
  return out;
}

}  // namespace anonle::revocable
