#include "anonle/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "anonle/errors.hpp"

namespace anonle {

namespace {

void require_cap(const PortGraph& g, std::size_t cap, const char* what) {
  if (g.node_count() > cap) {
    throw CapExceeded(std::string(what) + ": n=" + std::to_string(g.node_count()) +
                      " exceeds exhaustive cap " + std::to_string(cap) +
                      "; use conductance_spectral_bounds");
  }
}

// Walks all subsets in Gray-code order, keeping |S|, Vol(S) and |dS| current.
template <typename Visit>
void for_each_cut(const PortGraph& g, Visit&& visit) {
  const std::size_t n = g.node_count();
  std::vector<bool> in(n, false);
  std::int64_t size = 0, vol = 0, boundary = 0;
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t i = 1; i < total; ++i) {
    auto v = static_cast<NodeIndex>(std::countr_zero(i));
    std::int64_t inside = 0;
    for (const PortEnd& e : g.ports(v)) inside += in[e.neighbor] ? 1 : 0;
    const std::int64_t deg = g.degree(v);
    if (!in[v]) {
      in[v] = true;
      ++size;
      vol += deg;
      boundary += deg - 2 * inside;
    } else {
      in[v] = false;
      --size;
      vol -= deg;
      boundary -= deg - 2 * inside;
    }
    if (size == 0 || size == static_cast<std::int64_t>(n)) continue;
    visit(size, vol, boundary);
  }
}

bool less(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  // a/b < c/d for positive denominators
  return a * d < c * b;
}

}  // namespace

Rational conductance_exact(const PortGraph& g, std::size_t cap) {
  require_cap(g, cap, "conductance_exact");
  if (g.node_count() < 2) throw InvalidParameter("conductance needs at least two nodes");
  const std::int64_t total_vol = 2 * static_cast<std::int64_t>(g.edge_count());
  std::int64_t best_num = 1, best_den = 0;
  for_each_cut(g, [&](std::int64_t, std::int64_t vol, std::int64_t boundary) {
    std::int64_t den = std::min(vol, total_vol - vol);
    if (best_den == 0 || less(boundary, den, best_num, best_den)) {
      best_num = boundary;
      best_den = den;
    }
  });
  return Rational(best_num, best_den);
}

Rational isoperimetric_exact(const PortGraph& g, std::size_t cap) {
  require_cap(g, cap, "isoperimetric_exact");
  if (g.node_count() < 2) throw InvalidParameter("isoperimetric number needs at least two nodes");
  const auto half = static_cast<std::int64_t>(g.node_count() / 2);
  std::int64_t best_num = 1, best_den = 0;
  for_each_cut(g, [&](std::int64_t size, std::int64_t, std::int64_t boundary) {
    if (size > half) return;
    if (best_den == 0 || less(boundary, size, best_num, best_den)) {
      best_num = boundary;
      best_den = size;
    }
  });
  return Rational(best_num, best_den);
}

Rational lazy_walk_conductance_exact(const PortGraph& g, std::size_t cap) {
  require_cap(g, cap, "lazy_walk_conductance_exact");
  const std::size_t n = g.node_count();
  if (n < 2) throw InvalidParameter("walk conductance needs at least two nodes");
  const auto two_m = static_cast<std::int64_t>(2 * g.edge_count());

  // Ergodic flow pi(u) P(u,v) for every directed edge, and pi itself.
  std::vector<Rational> pi(n);
  for (NodeIndex v = 0; v < n; ++v) pi[v] = Rational(g.degree(v), two_m);

  std::vector<bool> in(n, false);
  Rational flow(0), mass(0);
  Rational best(-1);
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t i = 1; i < total; ++i) {
    auto v = static_cast<NodeIndex>(std::countr_zero(i));
    const Rational step = pi[v] * Rational(1, 2 * static_cast<std::int64_t>(g.degree(v)));
    Rational to_inside(0), to_outside(0);
    for (const PortEnd& e : g.ports(v)) {
      // flow v->u equals flow u->v for a reversible chain; both are summed explicitly
      const Rational back =
          pi[e.neighbor] * Rational(1, 2 * static_cast<std::int64_t>(g.degree(e.neighbor)));
      if (in[e.neighbor]) {
        to_inside += back;
      } else {
        to_outside += step;
      }
    }
    if (!in[v]) {
      in[v] = true;
      mass += pi[v];
      flow += to_outside - to_inside;
    } else {
      in[v] = false;
      mass -= pi[v];
      flow -= to_outside - to_inside;
    }
    if (mass > Rational(1, 2) || mass == Rational(0)) continue;
    Rational ratio = flow / mass;
    if (best < Rational(0) || ratio < best) best = ratio;
  }
  return best;
}

SpectralBounds conductance_spectral_bounds(const PortGraph& g, double tolerance,
                                           std::uint64_t max_iterations) {
  const std::size_t n = g.node_count();
  if (n < 2) throw InvalidParameter("spectral bounds need at least two nodes");
  const double two_m = 2.0 * static_cast<double>(g.edge_count());

  std::vector<double> sqrt_deg(n), top(n);
  for (NodeIndex v = 0; v < n; ++v) {
    sqrt_deg[v] = std::sqrt(static_cast<double>(g.degree(v)));
    top[v] = sqrt_deg[v] / std::sqrt(two_m);
  }
  auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
    for (NodeIndex v = 0; v < n; ++v) {
      double acc = 0.0;
      for (const PortEnd& e : g.ports(v)) acc += x[e.neighbor] / sqrt_deg[e.neighbor];
      y[v] = 0.5 * x[v] + 0.5 * acc / sqrt_deg[v];
    }
  };
  auto deflate = [&](std::vector<double>& x) {
    double dot = 0.0;
    for (std::size_t v = 0; v < n; ++v) dot += x[v] * top[v];
    for (std::size_t v = 0; v < n; ++v) x[v] -= dot * top[v];
  };
  auto norm = [](const std::vector<double>& x) {
    return std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
  };

  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> x(n), y(n);
  for (auto& value : x) value = unif(rng);
  deflate(x);
  double len = norm(x);
  for (auto& value : x) value /= len;

  SpectralBounds out;
  bool converged = false;
  double rho = 0.0;
  for (std::uint64_t it = 1; it <= max_iterations; ++it) {
    apply(x, y);
    deflate(y);
    rho = std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
    double residual = 0.0;
    for (std::size_t v = 0; v < n; ++v) residual += (y[v] - rho * x[v]) * (y[v] - rho * x[v]);
    residual = std::sqrt(residual);
    out.iterations = it;
    const double ylen = norm(y);
    if (residual <= tolerance || ylen <= tolerance) {
      if (ylen <= tolerance) rho = 0.0;
      converged = true;
      break;
    }
    for (std::size_t v = 0; v < n; ++v) x[v] = y[v] / ylen;
  }
  if (!converged) {
    throw NumericalFailure("power iteration did not converge within " +
                           std::to_string(max_iterations) + " iterations");
  }
  const double lambda = std::clamp(rho, 0.0, 1.0);
  out.lambda2 = lambda;
  out.lower = (1.0 - lambda) / 2.0;
  out.upper = std::sqrt(2.0 * (1.0 - lambda));

  // Sweep over the walk eigenvector x / sqrt(deg).
  std::vector<NodeIndex> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> score(n);
  for (NodeIndex v = 0; v < n; ++v) score[v] = x[v] / sqrt_deg[v];
  std::stable_sort(order.begin(), order.end(),
                   [&](NodeIndex a, NodeIndex b) { return score[a] < score[b]; });
  std::vector<bool> in(n, false);
  double vol = 0.0, boundary = 0.0;
  double best = 1.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    NodeIndex v = order[i];
    double inside = 0.0;
    for (const PortEnd& e : g.ports(v)) inside += in[e.neighbor] ? 1.0 : 0.0;
    in[v] = true;
    vol += g.degree(v);
    boundary += g.degree(v) - 2.0 * inside;
    best = std::min(best, boundary / std::min(vol, two_m - vol));
  }
  out.sweep_cut_conductance = best;
  return out;
}

std::uint64_t mixing_time_lazy(const PortGraph& g, std::size_t cap, std::uint64_t max_steps) {
  const std::size_t n = g.node_count();
  if (n > cap) {
    throw CapExceeded("mixing_time_lazy: n=" + std::to_string(n) + " exceeds dense cap " +
                      std::to_string(cap));
  }
  if (n == 1) return 1;
  const double two_m = 2.0 * static_cast<double>(g.edge_count());
  std::vector<double> pi(n), inv_two_deg(n);
  for (NodeIndex v = 0; v < n; ++v) {
    pi[v] = g.degree(v) / two_m;
    inv_two_deg[v] = 0.5 / g.degree(v);
  }
  // Rounding slack on the 1/(2n) threshold; boundary cases like K3 hit it exactly.
  const double threshold = (1.0 / (2.0 * static_cast<double>(n))) * (1.0 + 1e-9);

  // Row s holds the distribution after t steps from a Dirac mass at s.
  std::vector<double> dist(n * n, 0.0), next(n * n, 0.0);
  for (std::size_t s = 0; s < n; ++s) dist[s * n + s] = 1.0;
  for (std::uint64_t t = 1; t <= max_steps; ++t) {
    double worst = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double* row = &dist[s * n];
      double* out = &next[s * n];
      for (NodeIndex v = 0; v < n; ++v) {
        double acc = 0.5 * row[v];
        for (const PortEnd& e : g.ports(v)) acc += row[e.neighbor] * inv_two_deg[e.neighbor];
        out[v] = acc;
        worst = std::max(worst, std::abs(acc - pi[v]));
      }
    }
    dist.swap(next);
    if (worst <= threshold) return t;
  }
  throw NumericalFailure("mixing_time_lazy: no mixing within step cap");
}

GraphMetrics compute_metrics(const PortGraph& g) {
  GraphMetrics out;
  out.n = g.node_count();
  out.m = g.edge_count();
  out.t_mix = mixing_time_lazy(g);
  if (out.n <= kExhaustiveCutCap) {
    out.conductance_exact = conductance_exact(g);
    out.isoperimetric_exact = isoperimetric_exact(g);
    out.conductance = boost::rational_cast<double>(*out.conductance_exact);
    out.isoperimetric = boost::rational_cast<double>(*out.isoperimetric_exact);
  } else {
    out.spectral = conductance_spectral_bounds(g);
    out.conductance = out.spectral->sweep_cut_conductance;
    // Exact for regular graphs (|S| <= n/2 implies Vol(S) <= Vol(V\S)); an estimate otherwise.
    out.isoperimetric = out.conductance * g.min_degree();
    out.conductance_method = MethodTag::spectral_estimate;
    out.isoperimetric_method = MethodTag::spectral_estimate;
  }
  return out;
}

std::string to_string(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

nlohmann::json to_json(const GraphMetrics& metrics) {
  auto tag = [](MethodTag t) { return t == MethodTag::exact ? "exact" : "spectral-estimate"; };
  nlohmann::json j;
  j["n"] = metrics.n;
  j["m"] = metrics.m;
  j["conductance"] = metrics.conductance_exact ? nlohmann::json(to_string(*metrics.conductance_exact))
                                               : nlohmann::json(metrics.conductance);
  j["isoperimetric"] = metrics.isoperimetric_exact
                           ? nlohmann::json(to_string(*metrics.isoperimetric_exact))
                           : nlohmann::json(metrics.isoperimetric);
  j["t_mix"] = metrics.t_mix;
  j["method_tags"] = {{"conductance", tag(metrics.conductance_method)},
                      {"isoperimetric", tag(metrics.isoperimetric_method)},
                      {"t_mix", "exact"}};
  if (metrics.spectral) {
    j["spectral"] = {{"lambda2", metrics.spectral->lambda2},
                     {"walk_conductance_lower", metrics.spectral->lower},
                     {"walk_conductance_upper", metrics.spectral->upper},
                     {"sweep_cut_conductance", metrics.spectral->sweep_cut_conductance}};
  }
  return j;
}

}  // namespace anonle
