#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace anonle {

// FNV-1a, used only to turn phase labels into stream keys.
constexpr std::uint64_t label_hash(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Reproducible random stream. Streams are split by hashing
/// (master seed, node index, phase label) through std::seed_seq into an
/// independent mt19937_64 state.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t node, std::string_view label);

  std::uint64_t next() { return engine_(); }

  // Uniform on [lo, hi], both inclusive.
  std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi) {
    return std::uniform_int_distribution<std::uint64_t>(lo, hi)(engine_);
  }
  // Uniform index on [0, n).
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform(0, n - 1)); }
  bool bernoulli(double p) {
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    return std::bernoulli_distribution(p)(engine_);
  }
  double uniform01() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

RngStream rng_stream(std::uint64_t master_seed, std::uint64_t node, std::string_view label);

/// Handle given to a node automaton. It can open labelled streams but does
/// not expose the node index it was derived from.
class NodeRng {
 public:
  NodeRng(std::uint64_t master_seed, std::uint64_t node) : seed_(master_seed), node_(node) {}
  RngStream stream(std::string_view label) const { return RngStream(seed_, node_, label); }

 private:
  std::uint64_t seed_;
  std::uint64_t node_;
};

}  // namespace anonle
