#include "anonle/graph.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "anonle/errors.hpp"

namespace anonle {

namespace {

constexpr int kGenerationAttempts = 1000;

std::mt19937_64 attempt_rng(std::uint64_t seed, int attempt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(attempt), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

std::vector<std::uint32_t> bfs_distances(const PortGraph& g, NodeIndex src) {
  std::vector<std::uint32_t> dist(g.node_count(), UINT32_MAX);
  std::queue<NodeIndex> q;
  dist[src] = 0;
  q.push(src);
  while (!q.empty()) {
    NodeIndex v = q.front();
    q.pop();
    for (const PortEnd& e : g.ports(v)) {
      if (dist[e.neighbor] == UINT32_MAX) {
        dist[e.neighbor] = dist[v] + 1;
        q.push(e.neighbor);
      }
    }
  }
  return dist;
}

}  // namespace

bool is_connected(const std::vector<std::vector<NodeIndex>>& adjacency) {
  if (adjacency.empty()) return false;
  std::vector<bool> seen(adjacency.size(), false);
  std::vector<NodeIndex> stack{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!stack.empty()) {
    NodeIndex v = stack.back();
    stack.pop_back();
    for (NodeIndex u : adjacency[v]) {
      if (u < adjacency.size() && !seen[u]) {
        seen[u] = true;
        ++count;
        stack.push_back(u);
      }
    }
  }
  return count == adjacency.size();
}

PortGraph PortGraph::from_adjacency(const std::vector<std::vector<NodeIndex>>& adjacency) {
  const std::size_t n = adjacency.size();
  if (n == 0) throw ValidationError("graph has no nodes");
  PortGraph g;
  g.offsets_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) g.offsets_[v + 1] = g.offsets_[v] + adjacency[v].size();
  g.ends_.resize(g.offsets_[n]);

  for (std::size_t v = 0; v < n; ++v) {
    std::set<NodeIndex> seen;
    for (NodeIndex u : adjacency[v]) {
      if (u >= n) throw ValidationError("neighbor index out of range at node " + std::to_string(v));
      if (u == v) throw ValidationError("self-loop at node " + std::to_string(v));
      if (!seen.insert(u).second) {
        throw ValidationError("duplicate edge " + std::to_string(v) + "-" + std::to_string(u));
      }
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t i = 0; i < adjacency[v].size(); ++i) {
      NodeIndex u = adjacency[v][i];
      const auto& back = adjacency[u];
      auto it = std::find(back.begin(), back.end(), static_cast<NodeIndex>(v));
      if (it == back.end()) {
        throw ValidationError("edge " + std::to_string(v) + "-" + std::to_string(u) +
                              " is not symmetric");
      }
      g.ends_[g.offsets_[v] + i] = PortEnd{u, static_cast<Port>(it - back.begin()) + 1};
    }
  }
  if (!is_connected(adjacency)) throw ValidationError("graph is disconnected");
  return g;
}

std::uint32_t PortGraph::max_degree() const {
  std::uint32_t best = 0;
  for (NodeIndex v = 0; v < node_count(); ++v) best = std::max(best, degree(v));
  return best;
}

std::uint32_t PortGraph::min_degree() const {
  std::uint32_t best = UINT32_MAX;
  for (NodeIndex v = 0; v < node_count(); ++v) best = std::min(best, degree(v));
  return node_count() == 0 ? 0 : best;
}

std::vector<std::pair<NodeIndex, NodeIndex>> PortGraph::edges() const {
  std::vector<std::pair<NodeIndex, NodeIndex>> out;
  out.reserve(edge_count());
  for (NodeIndex v = 0; v < node_count(); ++v) {
    for (const PortEnd& e : ports(v)) {
      if (v < e.neighbor) out.emplace_back(v, e.neighbor);
    }
  }
  return out;
}

std::uint32_t PortGraph::diameter() const {
  std::uint32_t best = 0;
  for (NodeIndex v = 0; v < node_count(); ++v) {
    auto d = bfs_distances(*this, v);
    best = std::max(best, *std::max_element(d.begin(), d.end()));
  }
  return best;
}

void PortGraph::validate() const {
  const std::size_t n = node_count();
  std::vector<std::vector<NodeIndex>> adjacency(n);
  for (NodeIndex v = 0; v < n; ++v) {
    for (Port p = 1; p <= degree(v); ++p) {
      const PortEnd& e = port(v, p);
      if (e.neighbor >= n) throw ValidationError("dangling port");
      if (e.reciprocal < 1 || e.reciprocal > degree(e.neighbor)) {
        throw ValidationError("reciprocal port out of range at node " + std::to_string(v));
      }
      const PortEnd& back = port(e.neighbor, e.reciprocal);
      if (back.neighbor != v || back.reciprocal != p) {
        throw ValidationError("reciprocity violated at node " + std::to_string(v) + " port " +
                              std::to_string(p));
      }
      adjacency[v].push_back(e.neighbor);
    }
  }
  // from_adjacency re-checks simplicity and connectivity.
  (void)from_adjacency(adjacency);
}

std::string PortGraph::to_edge_list() const {
  std::ostringstream out;
  for (auto [u, v] : edges()) out << u << ' ' << v << '\n';
  return out.str();
}

PortGraph gen_cycle(std::size_t n) {
  if (n < 3) throw InvalidParameter("cycle needs n >= 3");
  std::vector<std::vector<NodeIndex>> adj(n);
  for (std::size_t v = 0; v < n; ++v) {
    adj[v] = {static_cast<NodeIndex>((v + 1) % n), static_cast<NodeIndex>((v + n - 1) % n)};
  }
  return PortGraph::from_adjacency(adj);
}

PortGraph gen_path(std::size_t n) {
  if (n < 2) throw InvalidParameter("path needs n >= 2");
  std::vector<std::vector<NodeIndex>> adj(n);
  for (std::size_t v = 0; v + 1 < n; ++v) {
    adj[v].push_back(static_cast<NodeIndex>(v + 1));
    adj[v + 1].push_back(static_cast<NodeIndex>(v));
  }
  return PortGraph::from_adjacency(adj);
}

PortGraph gen_complete(std::size_t n) {
  if (n < 2) throw InvalidParameter("complete graph needs n >= 2");
  std::vector<std::vector<NodeIndex>> adj(n);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t u = 0; u < n; ++u) {
      if (u != v) adj[v].push_back(static_cast<NodeIndex>(u));
    }
  }
  return PortGraph::from_adjacency(adj);
}

PortGraph gen_random_regular(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n < 2 || d < 1 || d >= n) throw InvalidParameter("random regular needs 1 <= d < n");
  if ((n * d) % 2 != 0) throw InvalidParameter("random regular needs n*d even");

  // Configuration model with rejection of self-loops and multi-edges.
  std::vector<NodeIndex> stubs;
  stubs.reserve(n * d);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t i = 0; i < d; ++i) stubs.push_back(static_cast<NodeIndex>(v));
  }
  for (int attempt = 0; attempt < kGenerationAttempts; ++attempt) {
    auto rng = attempt_rng(seed, attempt);
    std::vector<NodeIndex> perm = stubs;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<NodeIndex>> adj(n);
    bool ok = true;
    for (std::size_t i = 0; i < perm.size() && ok; i += 2) {
      NodeIndex a = perm[i], b = perm[i + 1];
      if (a == b || std::find(adj[a].begin(), adj[a].end(), b) != adj[a].end()) {
        ok = false;
        break;
      }
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    if (!ok || !is_connected(adj)) continue;
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return PortGraph::from_adjacency(adj);
  }
  throw GenerationFailure("random regular graph: no simple connected sample within attempt bound");
}

PortGraph gen_erdos_renyi(std::size_t n, double p_edge, std::uint64_t seed) {
  if (n < 2 || !(p_edge > 0.0) || p_edge > 1.0) {
    throw InvalidParameter("erdos-renyi needs n >= 2 and 0 < p <= 1");
  }
  for (int attempt = 0; attempt < kGenerationAttempts; ++attempt) {
    auto rng = attempt_rng(seed, attempt);
    std::bernoulli_distribution coin(p_edge);
    std::vector<std::vector<NodeIndex>> adj(n);
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = u + 1; v < n; ++v) {
        if (coin(rng)) {
          adj[u].push_back(static_cast<NodeIndex>(v));
          adj[v].push_back(static_cast<NodeIndex>(u));
        }
      }
    }
    if (!is_connected(adj)) continue;
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return PortGraph::from_adjacency(adj);
  }
  throw GenerationFailure("erdos-renyi graph: no connected sample within attempt bound");
}

PortGraph load_edge_list(std::string_view text) {
  std::vector<std::vector<NodeIndex>> adj;
  std::set<std::pair<NodeIndex, NodeIndex>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);

    std::vector<std::uint64_t> values;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      if (i >= line.size()) break;
      std::uint64_t value = 0;
      auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + line.size(), value);
      if (ec != std::errc() || ptr == line.data() + i) {
        throw ParseError(line_no, "malformed token");
      }
      i = static_cast<std::size_t>(ptr - line.data());
      if (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') {
        throw ParseError(line_no, "malformed token");
      }
      values.push_back(value);
    }
    if (values.empty()) continue;
    if (values.size() != 2) throw ParseError(line_no, "expected two node indices");
    if (values[0] > UINT32_MAX - 1 || values[1] > UINT32_MAX - 1) {
      throw ParseError(line_no, "node index too large");
    }
    auto u = static_cast<NodeIndex>(values[0]);
    auto v = static_cast<NodeIndex>(values[1]);
    if (u == v) throw ParseError(line_no, "self-loop");
    if (!seen.insert({std::min(u, v), std::max(u, v)}).second) {
      throw ParseError(line_no, "duplicate edge");
    }
    std::size_t need = std::max(u, v) + 1;
    if (adj.size() < need) adj.resize(need);
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  if (adj.empty()) throw ParseError(line_no, "no edges");
  if (!is_connected(adj)) throw ParseError(line_no, "graph is disconnected");
  return PortGraph::from_adjacency(adj);
}

PortGraph make_family(std::string_view family, std::size_t n, std::uint64_t seed) {
  if (family == "cycle") return gen_cycle(n);
  if (family == "path") return gen_path(n);
  if (family == "complete") return gen_complete(n);
  auto number_after = [&](std::string_view prefix) -> std::string {
    return std::string(family.substr(prefix.size()));
  };
  if (family.starts_with("regular")) {
    std::size_t d = std::stoul(number_after("regular"));
    return gen_random_regular(n, d, seed);
  }
  if (family.starts_with("er")) {
    double p = std::stod(number_after("er"));
    return gen_erdos_renyi(n, p, seed);
  }
  throw InvalidParameter("unknown graph family '" + std::string(family) + "'");
}

}  // namespace anonle
