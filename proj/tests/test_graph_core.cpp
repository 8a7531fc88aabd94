#include <Eigen/Dense>
#include <boost/rational.hpp>
#include <cmath>
#include <functional>
#include <random>

#include "anonle/errors.hpp"
#include "anonle/graph.hpp"
#include "anonle/metrics.hpp"
#include "anonle/rng.hpp"
#include "doctest.h"

using namespace anonle;

namespace {

struct NaiveCuts {
  Rational conductance{1000000};
  Rational walk_conductance{1000000};
  Rational isoperimetric{1000000};
};

// Recursive include/exclude over vertices, the reverse of a bitmask loop.
NaiveCuts naive_cuts(const PortGraph& g) {
  const std::size_t n = g.node_count();
  const auto edges = g.edges();
  const std::int64_t two_m = 2 * static_cast<std::int64_t>(g.edge_count());
  NaiveCuts best;
  std::vector<char> in(n, 0);
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == n) {
      std::int64_t size = 0, vol = 0, cut = 0;
      for (std::size_t v = 0; v < n; ++v) {
        if (in[v]) {
          ++size;
          vol += g.degree(static_cast<NodeIndex>(v));
        }
      }
      if (size == 0 || size == static_cast<std::int64_t>(n)) return;
      for (auto [a, b] : edges) cut += (in[a] != in[b]) ? 1 : 0;
      best.conductance = std::min(best.conductance, Rational(cut, std::min(vol, two_m - vol)));
      if (2 * size <= static_cast<std::int64_t>(n)) {
        best.isoperimetric = std::min(best.isoperimetric, Rational(cut, size));
      }
      if (2 * vol <= two_m) {
        // Q(S, S^c) = sum over cut edges of pi(u) * 1/(2 deg u) = cut / (4m).
        best.walk_conductance =
            std::min(best.walk_conductance, Rational(cut, 2 * two_m) / Rational(vol, two_m));
      }
      return;
    }
    in[n - 1 - i] = 1;
    rec(i + 1);
    in[n - 1 - i] = 0;
    rec(i + 1);
  };
  rec(0);
  return best;
}

std::vector<PortGraph> small_graphs() {
  std::vector<PortGraph> out;
  for (std::size_t n = 2; n <= 10; ++n) {
    out.push_back(gen_path(n));
    out.push_back(gen_complete(n));
    if (n >= 3) out.push_back(gen_cycle(n));
  }
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    std::size_t n = 4 + seed % 7;
    try {
      out.push_back(gen_erdos_renyi(n, 0.45, seed));
    } catch (const GenerationFailure&) {
    }
  }
  out.push_back(gen_random_regular(10, 3, 3));
  out.push_back(gen_random_regular(8, 3, 5));
  return out;
}

using RMatrix = std::vector<std::vector<Rational>>;

// Exact lazy-walk mixing time by repeated rational matrix products.
std::uint64_t rational_mixing_time(const PortGraph& g) {
  const std::size_t n = g.node_count();
  RMatrix P(n, std::vector<Rational>(n, Rational(0)));
  for (NodeIndex v = 0; v < n; ++v) {
    P[v][v] += Rational(1, 2);
    for (const auto& e : g.ports(v)) P[v][e.neighbor] += Rational(1, 2 * g.degree(v));
  }
  const std::int64_t two_m = 2 * static_cast<std::int64_t>(g.edge_count());
  RMatrix cur = P;
  for (std::uint64_t t = 1; t < 200; ++t) {
    Rational worst(0);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        Rational dev = cur[a][b] - Rational(g.degree(static_cast<NodeIndex>(b)), two_m);
        worst = std::max(worst, dev < 0 ? -dev : dev);
      }
    }
    if (worst <= Rational(1, static_cast<std::int64_t>(2 * n))) return t;
    RMatrix next(n, std::vector<Rational>(n, Rational(0)));
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t b = 0; b < n; ++b) next[a][b] += cur[a][c] * P[c][b];
    cur = std::move(next);
  }
  return 0;
}

PortGraph complete_minus_matching(std::size_t n, std::size_t removed_pairs) {
  std::vector<std::vector<NodeIndex>> adj(n);
  for (NodeIndex a = 0; a < n; ++a) {
    for (NodeIndex b = 0; b < n; ++b) {
      if (a == b) continue;
      bool matched = (a / 2 == b / 2) && a / 2 < removed_pairs;
      if (!matched) adj[a].push_back(b);
    }
  }
  return PortGraph::from_adjacency(adj);
}

}  // namespace

TEST_CASE("generated graphs pass validation and port reciprocity") {
  for (const auto& g : small_graphs()) {
    CHECK_NOTHROW(g.validate());
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      for (Port p = 1; p <= g.degree(v); ++p) {
        const auto& e = g.port(v, p);
        CHECK(g.port(e.neighbor, e.reciprocal).neighbor == v);
        CHECK(g.port(e.neighbor, e.reciprocal).reciprocal == p);
      }
    }
  }
}

TEST_CASE("edge list round trip and rejection of bad input") {
  PortGraph g = gen_random_regular(12, 3, 9);
  PortGraph h = load_edge_list(g.to_edge_list());
  CHECK(h.node_count() == 12);
  CHECK(h.edges() == g.edges());
  CHECK_THROWS_AS(load_edge_list("0 1\n2 3\n"), ParseError);
  CHECK_THROWS_AS(load_edge_list("0 0\n"), ParseError);
  CHECK_THROWS(load_edge_list("0 x\n"));
}

TEST_CASE("small conductance and isoperimetric values") {
  CHECK(conductance_exact(gen_complete(4)) == Rational(2, 3));
  CHECK(conductance_exact(gen_cycle(4)) == Rational(1, 2));
  CHECK(conductance_exact(gen_cycle(8)) == Rational(1, 4));
  CHECK(isoperimetric_exact(gen_cycle(8)) == Rational(1, 2));
  CHECK(isoperimetric_exact(gen_complete(4)) == Rational(2));
  CHECK(lazy_walk_conductance_exact(gen_cycle(8)) == Rational(1, 8));
  CHECK_THROWS_AS(conductance_exact(gen_cycle(21)), CapExceeded);
}

TEST_CASE("exact cut quantities agree with a second enumeration") {
  for (const auto& g : small_graphs()) {
    NaiveCuts naive = naive_cuts(g);
    CAPTURE(g.to_edge_list());
    CHECK(conductance_exact(g) == naive.conductance);
    CHECK(isoperimetric_exact(g) == naive.isoperimetric);
    CHECK(lazy_walk_conductance_exact(g) == naive.walk_conductance);
  }
}

TEST_CASE("mixing time of K2 and K3 matches exact rational powers") {
  CHECK(rational_mixing_time(gen_complete(2)) == 1);
  CHECK(rational_mixing_time(gen_complete(3)) == 1);
  CHECK(mixing_time_lazy(gen_complete(2)) == 1);
  CHECK(mixing_time_lazy(gen_complete(3)) == 1);
  for (std::size_t n : {4, 5, 6}) {
    CHECK(mixing_time_lazy(gen_cycle(n)) == rational_mixing_time(gen_cycle(n)));
    CHECK(mixing_time_lazy(gen_path(n)) == rational_mixing_time(gen_path(n)));
  }
}

TEST_CASE("cycle mixing time scales quadratically") {
  double ratio = static_cast<double>(mixing_time_lazy(gen_cycle(16))) /
                 static_cast<double>(mixing_time_lazy(gen_cycle(8)));
  CHECK(ratio >= 3.0);
  CHECK(ratio <= 5.0);
}

TEST_CASE("mixing time does not grow when edges are added back to K8 minus a matching") {
  std::uint64_t prev = mixing_time_lazy(complete_minus_matching(8, 4));
  for (std::size_t removed = 3;; --removed) {
    std::uint64_t t = mixing_time_lazy(complete_minus_matching(8, removed));
    CHECK(t <= prev);
    prev = t;
    if (removed == 0) break;
  }
}

TEST_CASE("spectral bounds sandwich the walk conductance") {
  auto k2 = conductance_spectral_bounds(gen_complete(2));
  CHECK(k2.lambda2 == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(k2.lower == doctest::Approx(0.5));
  CHECK(k2.upper == doctest::Approx(std::sqrt(2.0)));

  for (const auto& g : small_graphs()) {
    if (g.node_count() < 3) continue;
    const std::size_t n = g.node_count();
    // Independent eigen-decomposition of D^{1/2} P D^{-1/2}.
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
    for (NodeIndex v = 0; v < n; ++v) {
      S(v, v) += 0.5;
      for (const auto& e : g.ports(v)) {
        S(v, e.neighbor) += 0.5 / std::sqrt(double(g.degree(v)) * g.degree(e.neighbor));
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(S);
    double lambda2 = solver.eigenvalues()(n - 2);
    auto b = conductance_spectral_bounds(g);
    CAPTURE(g.to_edge_list());
    CHECK(b.lambda2 == doctest::Approx(lambda2).epsilon(1e-6));
    const Rational phi = lazy_walk_conductance_exact(g);
    const double phi_d = boost::rational_cast<double>(phi);
    CHECK(b.lower <= phi_d + 1e-9);
    CHECK(phi_d <= b.upper + 1e-9);
    CHECK(b.sweep_cut_conductance >= boost::rational_cast<double>(conductance_exact(g)) - 1e-12);
  }
}

TEST_CASE("metrics json carries method tags") {
  auto j = to_json(compute_metrics(gen_cycle(8)));
  CHECK(j["n"] == 8);
  CHECK(j["m"] == 8);
  CHECK(j.contains("t_mix"));
  CHECK(j.dump().find("exact") != std::string::npos);
}

TEST_CASE("random streams are reproducible and split by label") {
  RngStream a(42, 3, "phase-a"), b(42, 3, "phase-a"), c(42, 3, "phase-b");
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    std::uint64_t x = a.next(), y = b.next(), z = c.next();
    CHECK(x == y);
    differs = differs || (x != z);
  }
  CHECK(differs);
}
