#include "graph_enum.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_set>

namespace enumeration {

namespace {

struct Small {
  std::size_t n = 0;
  std::uint32_t adj[8] = {};
};

// Vertex colors from iterated degree refinement. Colors are ranks of sorted
// signatures, so isomorphic graphs get matching color classes.
std::vector<int> refine(const Small& g) {
  std::vector<int> color(g.n);
  for (std::size_t v = 0; v < g.n; ++v) color[v] = __builtin_popcount(g.adj[v]);
  for (;;) {
    std::vector<std::vector<int>> sig(g.n);
    for (std::size_t v = 0; v < g.n; ++v) {
      sig[v].push_back(color[v]);
      std::vector<int> nb;
      for (std::size_t u = 0; u < g.n; ++u) {
        if (g.adj[v] >> u & 1) nb.push_back(color[u]);
      }
      std::sort(nb.begin(), nb.end());
      sig[v].insert(sig[v].end(), nb.begin(), nb.end());
    }
    auto sorted = sig;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<int> next(g.n);
    for (std::size_t v = 0; v < g.n; ++v) {
      next[v] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), sig[v]) - sorted.begin());
    }
    const auto classes = [](const std::vector<int>& c) {
      return std::set<int>(c.begin(), c.end()).size();
    };
    if (classes(next) == classes(color)) return next;
    color = std::move(next);
  }
}

// Smallest adjacency code over orderings that list color classes in order
// and permute freely inside each class.
std::uint64_t canonical_code(const Small& g) {
  const auto color = refine(g);
  std::vector<std::vector<std::size_t>> cells;
  std::map<int, std::vector<std::size_t>> by_color;
  for (std::size_t v = 0; v < g.n; ++v) by_color[color[v]].push_back(v);
  for (auto& [c, members] : by_color) cells.push_back(members);

  std::uint64_t best = UINT64_MAX;
  std::vector<std::size_t> order;
  std::function<void(std::size_t)> rec = [&](std::size_t cell) {
    if (cell == cells.size()) {
      std::uint64_t code = 0;
      for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t j = i + 1; j < g.n; ++j) {
          code = code << 1 | (g.adj[order[i]] >> order[j] & 1);
        }
      }
      best = std::min(best, code);
      return;
    }
    auto members = cells[cell];
    std::sort(members.begin(), members.end());
    do {
      order.insert(order.end(), members.begin(), members.end());
      rec(cell + 1);
      order.resize(order.size() - members.size());
    } while (std::next_permutation(members.begin(), members.end()));
  };
  rec(0);
  return best;
}

anonle::PortGraph to_port_graph(const Small& g) {
  std::vector<std::vector<anonle::NodeIndex>> adj(g.n);
  for (std::size_t v = 0; v < g.n; ++v) {
    for (std::size_t u = 0; u < g.n; ++u) {
      if (g.adj[v] >> u & 1) adj[v].push_back(static_cast<anonle::NodeIndex>(u));
    }
  }
  return anonle::PortGraph::from_adjacency(adj);
}

}  // namespace

std::vector<anonle::PortGraph> connected_graphs(std::size_t n) {
  if (n < 1 || n > 8) throw std::invalid_argument("connected_graphs supports 1 <= n <= 8");
  // Every connected graph has a vertex whose removal keeps it connected (a
  // leaf of a spanning tree), so extending each smaller class by one vertex
  // with a nonempty neighborhood reaches every class.
  std::vector<Small> level(1);
  level[0].n = 1;
  for (std::size_t size = 2; size <= n; ++size) {
    std::vector<Small> next;
    std::unordered_set<std::uint64_t> seen;
    for (const Small& g : level) {
      for (std::uint32_t mask = 1; mask < (1u << (size - 1)); ++mask) {
        Small h = g;
        h.n = size;
        h.adj[size - 1] = mask;
        for (std::size_t u = 0; u + 1 < size; ++u) {
          if (mask >> u & 1) h.adj[u] |= 1u << (size - 1);
        }
        if (seen.insert(canonical_code(h)).second) next.push_back(h);
      }
    }
    level = std::move(next);
  }
  std::vector<anonle::PortGraph> out;
  out.reserve(level.size());
  for (const Small& g : level) out.push_back(to_port_graph(g));
  return out;
}

}  // namespace enumeration
