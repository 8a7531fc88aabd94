#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <boost/rational.hpp>

#include "anonle/graph.hpp"
#include "json.hpp"

namespace anonle {

using Rational = boost::rational<std::int64_t>;

inline constexpr std::size_t kExhaustiveCutCap = 20;
inline constexpr std::size_t kDenseCap = 4096;

/// Graph conductance: min over nonempty proper S of |dS| / min(Vol(S), Vol(V\S)).
/// Exhaustive over all cuts; throws CapExceeded above `cap` nodes.
Rational conductance_exact(const PortGraph& g, std::size_t cap = kExhaustiveCutCap);

/// Isoperimetric number: min over 0 < |S| <= n/2 of |dS| / |S|.
Rational isoperimetric_exact(const PortGraph& g, std::size_t cap = kExhaustiveCutCap);

/// Conductance of the lazy simple random walk as a Markov chain,
/// min over pi(S) <= 1/2 of Q(S, V\S) / pi(S). For the lazy walk this is half
/// the graph conductance; it is computed from the chain, not from that identity.
Rational lazy_walk_conductance_exact(const PortGraph& g, std::size_t cap = kExhaustiveCutCap);

struct SpectralBounds {
  double lambda2 = 0.0;  // second-largest eigenvalue of the lazy walk matrix
  double lower = 0.0;    // (1 - lambda2) / 2 <= walk conductance
  double upper = 0.0;    // walk conductance <= sqrt(2 (1 - lambda2))
  // Graph conductance of the best sweep cut over the second eigenvector.
  // It is the conductance of an actual cut, so it upper-bounds Phi(G).
  double sweep_cut_conductance = 1.0;
  std::uint64_t iterations = 0;
};

/// Power iteration with deflation of the stationary direction on the
/// symmetrized lazy walk D^{1/2} P D^{-1/2}. Throws NumericalFailure when
/// the residual does not drop below `tolerance` within `max_iterations`.
SpectralBounds conductance_spectral_bounds(const PortGraph& g, double tolerance = 1e-10,
                                           std::uint64_t max_iterations = 2'000'000);

/// Smallest t with max_{start, v} |P^t(start, v) - pi(v)| <= 1/(2n) for the
/// lazy simple random walk. Throws CapExceeded above `cap` nodes.
std::uint64_t mixing_time_lazy(const PortGraph& g, std::size_t cap = kDenseCap,
                               std::uint64_t max_steps = 10'000'000);

enum class MethodTag { exact, spectral_estimate };

struct GraphMetrics {
  std::size_t n = 0;
  std::size_t m = 0;
  double conductance = 0.0;
  double isoperimetric = 0.0;
  std::uint64_t t_mix = 0;
  std::optional<Rational> conductance_exact;
  std::optional<Rational> isoperimetric_exact;
  MethodTag conductance_method = MethodTag::exact;
  MethodTag isoperimetric_method = MethodTag::exact;
  std::optional<SpectralBounds> spectral;
};

/// Exact metrics up to the cut cap; above it, conductance comes from the
/// sweep cut and isoperimetric number from the same cut scaled by degree.
GraphMetrics compute_metrics(const PortGraph& g);

nlohmann::json to_json(const GraphMetrics& metrics);

std::string to_string(const Rational& r);

}  // namespace anonle
