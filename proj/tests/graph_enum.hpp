#pragma once

#include <cstddef>
#include <vector>

#include "anonle/graph.hpp"

namespace enumeration {

/// All connected simple graphs on n vertices, one per isomorphism class
/// (n <= 8).
std::vector<anonle::PortGraph> connected_graphs(std::size_t n);

}  // namespace enumeration
