#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace anonle {

using NodeIndex = std::uint32_t;
// Ports are 1-based at every node, matching the usual port-numbering convention.
using Port = std::uint32_t;

struct PortEnd {
  NodeIndex neighbor;
  Port reciprocal;  // port number of this link at `neighbor`

  friend bool operator==(const PortEnd&, const PortEnd&) = default;
};

/// Anonymous undirected graph with port numbering.
///
/// Node indices exist for construction, metrics and observation only; protocol
/// automata see nothing but their degree and the ports 1..deg.
class PortGraph {
 public:
  PortGraph() = default;

  /// Builds a graph where node v's port p leads to adjacency[v][p-1].
  /// Throws ValidationError on self-loops, duplicate edges, asymmetric
  /// adjacency or a disconnected topology.
  static PortGraph from_adjacency(const std::vector<std::vector<NodeIndex>>& adjacency);

  std::size_t node_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t edge_count() const { return ends_.size() / 2; }

  std::uint32_t degree(NodeIndex v) const { return offsets_[v + 1] - offsets_[v]; }
  std::uint32_t max_degree() const;
  std::uint32_t min_degree() const;

  const PortEnd& port(NodeIndex v, Port p) const { return ends_[offsets_[v] + p - 1]; }
  std::span<const PortEnd> ports(NodeIndex v) const {
    return {ends_.data() + offsets_[v], degree(v)};
  }

  // Offset of (v, port 1) in a flat per-port array of size 2m.
  std::size_t port_offset(NodeIndex v) const { return offsets_[v]; }

  std::vector<std::pair<NodeIndex, NodeIndex>> edges() const;
  std::uint32_t diameter() const;

  // Re-checks reciprocity, port permutation, simplicity and connectivity.
  void validate() const;

  std::string to_edge_list() const;

 private:
  std::vector<std::uint32_t> offsets_;
  std::vector<PortEnd> ends_;
};

bool is_connected(const std::vector<std::vector<NodeIndex>>& adjacency);

PortGraph gen_cycle(std::size_t n);
PortGraph gen_path(std::size_t n);
PortGraph gen_complete(std::size_t n);
PortGraph gen_random_regular(std::size_t n, std::size_t d, std::uint64_t seed);
PortGraph gen_erdos_renyi(std::size_t n, double p_edge, std::uint64_t seed);

/// Parses "u v" lines (0-based, '#' comments). Ports at each node follow the
/// order in which its incident edges first appear in the text.
PortGraph load_edge_list(std::string_view text);

/// Builds one of the named families: cycle, path, complete, regular<d>,
/// er<p>. Used by the CLI and the experiment runner.
PortGraph make_family(std::string_view family, std::size_t n, std::uint64_t seed);

}  // namespace anonle
