#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "anonle/errors.hpp"
#include "anonle/graph.hpp"
#include "anonle/metrics.hpp"
#include "anonle/revocable.hpp"
#include "doctest.h"

using namespace anonle;
using namespace anonle::revocable;

namespace {

// Dense diffusion matrix with share 1/(2s): S = I + (A - D) / (2s).
Eigen::MatrixXd diffusion_matrix(const PortGraph& g, double s) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  Eigen::MatrixXd S = Eigen::MatrixXd::Identity(n, n);
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    S(v, v) -= g.degree(v) / (2.0 * s);
    for (const auto& e : g.ports(v)) S(v, e.neighbor) += 1.0 / (2.0 * s);
  }
  return S;
}

PortGraph star(std::size_t leaves) {
  std::vector<std::vector<NodeIndex>> adj(leaves + 1);
  for (NodeIndex v = 1; v <= leaves; ++v) {
    adj[0].push_back(v);
    adj[v].push_back(0);
  }
  return PortGraph::from_adjacency(adj);
}

}  // namespace

TEST_CASE("schedule for k=4, eps=1, xi=0.1, i_G=1/2") {
  auto s = schedule(4, 1.0, 0.1, 0.5);
  CHECK(s.s == 16.0);
  CHECK(s.r_k == 65584);
  CHECK(s.f_k == 168);
  CHECK(s.p_k == doctest::Approx(std::numbers::ln2 / 16).epsilon(1e-15));
  REQUIRE(s.tau_exact);
  CHECK(*s.tau_exact == Rational(14, 15));
  CHECK(s.dissemination == 16);
  CHECK(s.id_range_max == 65536ull * 256);
  CHECK(s.integral_denominator() == 32u);
}

TEST_CASE("schedule scales, forms and errors") {
  auto full = schedule(2, 1.0, 0.1);
  CHECK(full.r_formula == 2 * 64 * 4 + 8);  // 2 k^6 log2(s^2) + s log2(2k)
  auto scaled = schedule(2, 1.0, 0.1, std::nullopt, 0.01, 0.5);
  CHECK(scaled.r_k == static_cast<std::uint64_t>(std::ceil(full.r_formula * 0.01 - 1e-9)));
  CHECK(scaled.f_k == static_cast<std::uint64_t>(std::ceil(full.f_formula * 0.5 - 1e-9)));
  CHECK(scaled.scaled());
  CHECK_THROWS_AS(schedule(3, 1.0, 0.1), InvalidParameter);
  CHECK_THROWS_AS(schedule(4, 0.0, 0.1), InvalidParameter);
  CHECK_THROWS_AS(schedule(4, 1.0, 1.0), InvalidParameter);
  CHECK(k_sequence(8, 1.0, std::nullopt) == std::vector<std::uint64_t>{2, 4, 8, 16});
  CHECK(k_sequence(8, 1.0, 4) == std::vector<std::uint64_t>{2, 4});
}

TEST_CASE("one diffusion step on K2 and C4") {
  ExactPotentials k2 = ExactPotentials::from_colors({true, false}, 8);
  diffusion_step(gen_complete(2), k2);
  CHECK(k2.value(0) == mpq_class(1, 8));
  CHECK(k2.value(1) == mpq_class(7, 8));

  PortGraph c4 = gen_cycle(4);
  ExactPotentials p = ExactPotentials::from_colors({false, true, false, true}, 8);
  diffusion_step(c4, p);
  const mpq_class expected[4] = {mpq_class(3, 4), mpq_class(1, 4), mpq_class(3, 4), mpq_class(1, 4)};
  for (NodeIndex v = 0; v < 4; ++v) CHECK(p.value(v) == expected[v]);
  CHECK(p.total() == 2);

  Eigen::VectorXd x(4);
  x << 1, 0, 1, 0;
  Eigen::VectorXd y = diffusion_matrix(c4, 4.0) * x;
  for (NodeIndex v = 0; v < 4; ++v) CHECK(y(v) == doctest::Approx(p.value(v).get_d()));
}

TEST_CASE("uniform and all-black potentials are fixed points") {
  PortGraph g = gen_random_regular(10, 3, 2);
  ExactPotentials p = ExactPotentials::from_colors(std::vector<bool>(10, false), 8);
  for (int i = 0; i < 20; ++i) diffusion_step(g, p);
  for (NodeIndex v = 0; v < 10; ++v) CHECK(p.value(v) == 1);

  std::vector<Fixed> f(10, kFixedOne / 3);
  const auto before = f;
  diffusion_step(g, f, share_denominator_q32(4.0));
  CHECK(f == before);
}

TEST_CASE("exact total potential is conserved") {
  for (auto g : {gen_cycle(7), gen_complete(6), gen_erdos_renyi(8, 0.4, 3)}) {
    std::vector<bool> white(g.node_count(), false);
    white[0] = true;
    white[2] = true;
    ExactPotentials p = ExactPotentials::from_colors(white, 32);
    const mpq_class total = p.total();
    for (int i = 0; i < 60; ++i) {
      diffusion_step(g, p);
      REQUIRE(p.total() == total);
    }
  }
}

TEST_CASE("fixed-point diffusion tracks the dense matrix and drifts by at most n*r ulps") {
  PortGraph g = gen_erdos_renyi(9, 0.4, 5);
  const double s = 16.0;
  const std::size_t n = g.node_count();
  std::vector<Fixed> f(n, kFixedOne);
  f[3] = 0;
  Eigen::VectorXd x = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  x(3) = 0;
  const Eigen::MatrixXd S = diffusion_matrix(g, s);
  const std::uint64_t denom = share_denominator_q32(s);
  const int steps = 400;
  for (int i = 0; i < steps; ++i) {
    diffusion_step(g, f, denom);
    x = S * x;
  }
  long double sum = 0;
  for (NodeIndex v = 0; v < n; ++v) {
    CHECK(std::abs(to_double(f[v]) - x(v)) <= 1e-12);
    sum += static_cast<long double>(f[v]);
  }
  const long double expected = static_cast<long double>(n - 1) * static_cast<long double>(kFixedOne);
  CHECK(std::abs(sum - expected) <= static_cast<long double>(n) * steps);
}

TEST_CASE("leader view ordering") {
  CHECK(fold_view({5, 8}, {3, 8}) == LeaderView{3, 8});
  CHECK(fold_view({3, 8}, {5, 8}) == LeaderView{3, 8});
  CHECK(fold_view({3, 8}, {99, 16}) == LeaderView{99, 16});
  CHECK(fold_view({99, 16}, {3, 8}) == LeaderView{99, 16});
  CHECK(fold_view({}, {7, 4}) == LeaderView{7, 4});
  CHECK(fold_view({7, 4}, {}) == LeaderView{7, 4});
}

TEST_CASE("decision rule") {
  const std::uint8_t tt_ft[4] = {1, 1, 0, 1};
  const std::uint8_t some_probing[4] = {0, 1, 0, 0};
  const std::uint8_t all_low[4] = {0, 0, 0, 0};
  const std::uint8_t half[4] = {1, 1, 0, 0};
  CHECK(should_choose_id(false, tt_ft, some_probing));
  CHECK_FALSE(should_choose_id(false, tt_ft, all_low));
  CHECK_FALSE(should_choose_id(true, tt_ft, some_probing));
  CHECK_FALSE(should_choose_id(false, half, some_probing));
}

TEST_CASE("a node with more neighbors than k^(1+eps) raises the alarm") {
  NodeConfig cfg;
  cfg.k_limit = 2;
  RevocableNode center(5, &cfg, NodeRng(3, 0));
  std::vector<RevocableNode> leaves;
  for (NodeIndex v = 1; v <= 5; ++v) leaves.emplace_back(1, &cfg, NodeRng(3, v));

  std::vector<std::optional<sim::LinkPayload>> center_out(5), in(5);
  center.step(0, {}, center_out);
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<std::optional<sim::LinkPayload>> out(1);
    leaves[i].step(0, {}, out);
    in[i] = out[0];
  }
  std::vector<std::optional<sim::LinkPayload>> out(5);
  center.step(1, in, out);
  CHECK(center.low());
  CHECK(center.potential() == 1.0);
  CHECK(center.alarms() == 1);

  RevocableConfig rc;
  rc.max_k = 2;
  rc.r_scale = 0.02;
  rc.f_scale = 0.1;
  auto outcome = run_revocable(star(5), rc);
  CHECK(outcome.per_k.at(0).alarms > 0);
}

TEST_CASE("single node elects itself at k=2") {
  RevocableConfig rc;
  rc.max_k = 2;
  auto out = run_revocable(PortGraph::from_adjacency({{}}), rc);
  CHECK(out.final_leaders == std::vector<NodeIndex>{0});
  CHECK(out.per_k.at(0).ids_chosen == 1);
  CHECK(out.metrics.messages_sent == 0);
}

TEST_CASE("exact and fixed-point runs see the same colors") {
  RevocableConfig rc;
  rc.max_k = 4;
  rc.i_G = 1.0;
  rc.r_scale = 0.002;
  rc.f_scale = 0.1;
  rc.run.master_seed = 12;
  PortGraph g = gen_cycle(4);
  auto fixed = run_revocable(g, rc);
  rc.mode = PotentialMode::exact;
  auto exact = run_revocable(g, rc);
  REQUIRE(fixed.per_k.size() == exact.per_k.size());
  for (std::size_t i = 0; i < fixed.per_k.size(); ++i) {
    CHECK(fixed.per_k[i].whites_per_iter == exact.per_k[i].whites_per_iter);
  }
  CHECK(fixed.logical_rounds == exact.logical_rounds);
  CHECK(fixed.logical_rounds == planned_rounds(4, rc));
}

TEST_CASE("ids are write-once and scaled runs are stamped") {
  RevocableConfig rc;
  rc.i_G = 0.5;
  rc.r_scale = 3.6e-4;
  rc.f_scale = 0.25;
  rc.run.master_seed = 3;
  auto out = run_revocable(gen_cycle(8), rc);
  CHECK(out.scaled);
  CHECK_FALSE(out.deviations.empty());
  std::uint64_t drawn = 0;
  for (const auto& snap : out.per_k) drawn += snap.ids_chosen;
  std::uint64_t holders = 0;
  for (auto id : out.ids) holders += id != 0 ? 1 : 0;
  CHECK(drawn == holders);
}
