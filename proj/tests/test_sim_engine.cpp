#include <set>
#include <sstream>

#include "anonle/engine.hpp"
#include "anonle/graph.hpp"
#include "anonle/rng.hpp"
#include "doctest.h"

using namespace anonle;
using namespace anonle::sim;

namespace {

struct Halter {
  StepResult step(std::uint64_t, Inbox, Outbox) { return {.halted = true}; }
  nlohmann::json observe() const { return {}; }
};

// Sends one 8-bit payload on every port for `rounds` rounds, then halts.
struct Echo {
  std::uint64_t rounds = 3;
  std::uint64_t received = 0;
  StepResult step(std::uint64_t round, Inbox in, Outbox out) {
    for (const auto& m : in) received += m ? 1 : 0;
    for (auto& slot : out) slot = LinkPayload(1).add(round & 0xff, 8);
    return {.halted = round + 1 >= rounds};
  }
  nlohmann::json observe() const { return {{"received", received}}; }
};

struct Oversized {
  StepResult step(std::uint64_t, Inbox, Outbox out) {
    out[0] = LinkPayload(2).add(0, 36);  // 4 + 36 = 40 bits
    return {};
  }
  nlohmann::json observe() const { return {}; }
};

// Sends its round number; records the round each stamp was read in.
struct Probe {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> seen;  // (sent, read)
  StepResult step(std::uint64_t round, Inbox in, Outbox out) {
    for (const auto& m : in) {
      if (m) seen.emplace_back(m->field(0), round);
    }
    if (round < 5) out[0] = LinkPayload(1).add(round, 8);
    return {.halted = round >= 6};
  }
  nlohmann::json observe() const { return {}; }
};

// Random chatter with variable field widths and an occasional serial tail.
struct Chatter {
  RngStream rng;
  explicit Chatter(NodeRng r) : rng(r.stream("chatter")) {}
  StepResult step(std::uint64_t round, Inbox, Outbox out) {
    for (auto& slot : out) {
      if (rng.bernoulli(0.5)) {
        LinkPayload p(static_cast<std::uint8_t>(1 + rng.index(7)));
        std::size_t fields = rng.index(4);
        for (std::size_t i = 0; i < fields; ++i) {
          auto w = static_cast<std::uint8_t>(1 + rng.index(6));
          p.add(rng.uniform(0, (1u << w) - 1), w);
        }
        if (rng.bernoulli(0.2)) {
          std::uint64_t limb = rng.uniform(0, 255);
          p.set_serial(std::span<const std::uint64_t>(&limb, 1), 8);
        }
        slot = p;
      }
    }
    StepResult res;
    res.halted = round >= 20;
    res.surcharge_rounds = round % 3;
    res.phase = round < 10 ? "early" : "late";
    return res;
  }
  nlohmann::json observe() const { return {}; }
};

}  // namespace

TEST_CASE("single node that halts immediately takes one round") {
  PortGraph g = PortGraph::from_adjacency({{}});
  auto m = run<Halter>(g, [](std::uint32_t, NodeRng) { return Halter{}; }, RunConfig{});
  CHECK(m.rounds_executed == 1);
  CHECK(m.messages_sent == 0);
  CHECK(m.all_halted);
}

TEST_CASE("two-node echo for three rounds sends six messages") {
  PortGraph g = gen_path(2);
  auto m = run<Echo>(g, [](std::uint32_t, NodeRng) { return Echo{}; }, RunConfig{});
  CHECK(m.rounds_executed == 3);
  CHECK(m.messages_sent == 6);
  CHECK(m.bits_sent == 6 * 12);
  CHECK(check_accounting(m, g.edge_count()).empty());
}

TEST_CASE("payload over the bit budget is a hard error") {
  PortGraph g = gen_path(2);
  RunConfig cfg;
  cfg.bit_budget_B = 32;
  try {
    run<Oversized>(g, [](std::uint32_t, NodeRng) { return Oversized{}; }, cfg);
    FAIL("expected a budget violation");
  } catch (const BudgetViolation& v) {
    CHECK(v.bits == 40);
    CHECK(v.budget == 32);
    CHECK(v.round == 0);
    CHECK(v.kind == 2);
    CHECK(std::string(v.what()).find("round 0") != std::string::npos);
  }
}

TEST_CASE("invalid run configuration is rejected") {
  PortGraph g = gen_path(2);
  RunConfig cfg;
  cfg.max_rounds = 0;
  CHECK_THROWS(run<Halter>(g, [](std::uint32_t, NodeRng) { return Halter{}; }, cfg));
  cfg.max_rounds = 10;
  cfg.bit_budget_B = 0;
  CHECK_THROWS(run<Halter>(g, [](std::uint32_t, NodeRng) { return Halter{}; }, cfg));
}

TEST_CASE("mail sent in round r is read in round r+1") {
  PortGraph g = gen_path(2);
  Simulation<Probe> sim(g, [](std::uint32_t, NodeRng) { return Probe{}; }, RunConfig{});
  sim.run();
  for (NodeIndex v = 0; v < 2; ++v) {
    REQUIRE(sim.node(v).seen.size() == 5);
    for (auto [sent, read] : sim.node(v).seen) CHECK(read == sent + 1);
  }
}

TEST_CASE("non-halting automata time out at max_rounds") {
  struct Forever {
    StepResult step(std::uint64_t, Inbox, Outbox) { return {}; }
    nlohmann::json observe() const { return {}; }
  };
  RunConfig cfg;
  cfg.max_rounds = 50;
  auto m = run<Forever>(gen_cycle(5), [](std::uint32_t, NodeRng) { return Forever{}; }, cfg);
  CHECK(m.timed_out);
  CHECK(m.rounds_executed == 50);
}

TEST_CASE("idle hints skip silent rounds but still count them") {
  struct Sleeper {
    int steps = 0;
    StepResult step(std::uint64_t round, Inbox, Outbox) {
      ++steps;
      StepResult r;
      r.idle_until = 1000;
      r.halted = round >= 1000;
      return r;
    }
    nlohmann::json observe() const { return {}; }
  };
  PortGraph g = gen_cycle(4);
  Simulation<Sleeper> sim(g, [](std::uint32_t, NodeRng) { return Sleeper{}; }, RunConfig{});
  auto m = sim.run();
  CHECK(m.rounds_executed == 1001);
  CHECK(m.accounted_rounds == 1001);
  CHECK(sim.node(0).steps == 2);
}

TEST_CASE("replay is deterministic down to the trace bytes") {
  PortGraph g = gen_random_regular(10, 3, 4);
  auto once = [&](std::ostringstream& trace) {
    RunConfig cfg;
    cfg.master_seed = 99;
    cfg.trace = &trace;
    cfg.trace_level = TraceLevel::messages;
    return run<Chatter>(g, [](std::uint32_t, NodeRng r) { return Chatter(r); }, cfg);
  };
  std::ostringstream t1, t2;
  auto m1 = once(t1);
  auto m2 = once(t2);
  CHECK(m1.to_json().dump() == m2.to_json().dump());
  CHECK(t1.str() == t2.str());
  CHECK(!t1.str().empty());
}

TEST_CASE("bit accounting equals an independent recount of the trace") {
  PortGraph g = gen_random_regular(10, 3, 4);
  std::ostringstream trace;
  RunConfig cfg;
  cfg.master_seed = 5;
  cfg.trace = &trace;
  cfg.trace_level = TraceLevel::messages;
  auto m = run<Chatter>(g, [](std::uint32_t, NodeRng r) { return Chatter(r); }, cfg);

  // Recompute every payload's size from its logged fields.
  std::istringstream in(trace.str());
  std::string line;
  std::uint64_t messages = 0, bits = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    std::uint64_t b = LinkPayload::kKindBits;
    for (const auto& f : j["fields"]) b += f["width"].get<std::uint64_t>();
    b += j.value("serial_bits", std::uint64_t{0});
    CHECK(b == j["bits"].get<std::uint64_t>());
    ++messages;
    bits += b;
  }
  CHECK(messages == m.messages_sent);
  CHECK(bits == m.bits_sent);
  std::uint64_t phase_msgs = 0;
  for (const auto& [name, p] : m.phases) phase_msgs += p.messages;
  CHECK(phase_msgs == m.messages_sent);
  CHECK(m.phases.contains("early"));
  CHECK(m.phases.contains("late"));
  // Surcharges: rounds 0..20 contribute round % 3 each.
  std::uint64_t extra = 0;
  for (std::uint64_t r = 0; r <= 20; ++r) extra += r % 3;
  CHECK(m.accounted_rounds == m.rounds_executed + extra);
  CHECK(check_accounting(m, g.edge_count()).empty());
}

TEST_CASE("payload width rules") {
  LinkPayload p(3);
  p.add(5, 3).add(0, 1);
  CHECK(p.framed_bits() == 8);
  CHECK(p.well_formed());
  LinkPayload bad(3);
  bad.add(8, 3);
  CHECK_FALSE(bad.well_formed());
  std::uint64_t limbs[3] = {1, 0, 1};
  LinkPayload tail(1);
  tail.set_serial(limbs, 129);
  CHECK(tail.well_formed());
  CHECK(tail.encoded_bits() == 4 + 129);
  tail.set_serial(limbs, 128);
  CHECK_FALSE(tail.well_formed());
  CHECK(bits_for(0) == 1);
  CHECK(bits_for(255) == 8);
  CHECK(bits_for(256) == 9);
}

TEST_CASE("rng stream contracts") {
  RngStream a(7, 0, "A"), a2(7, 0, "A"), b(7, 0, "B");
  int same_ab = 0;
  for (int i = 0; i < 100; ++i) {
    auto x = a.next();
    CHECK(x == a2.next());
    same_ab += (x == b.next()) ? 1 : 0;
  }
  CHECK(same_ab < 100);

  const std::uint64_t n = 37, hi = n * n * n * n;
  RngStream r(11, 2, "ids");
  bool all_in = true;
  std::uint64_t max_seen = 0;
  for (int i = 0; i < 1'000'000; ++i) {
    auto v = r.uniform(1, hi);
    all_in = all_in && v >= 1 && v <= hi;
    max_seen = std::max(max_seen, v);
  }
  CHECK(all_in);
  CHECK(max_seen > hi / 2);
}
