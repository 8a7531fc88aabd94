#include "anonle/rng.hpp"

namespace anonle {

namespace {

std::seed_seq make_seq(std::uint64_t master_seed, std::uint64_t node, std::string_view label) {
  const std::uint64_t tag = label_hash(label);
  return std::seed_seq{static_cast<std::uint32_t>(master_seed),
                       static_cast<std::uint32_t>(master_seed >> 32),
                       static_cast<std::uint32_t>(node),
                       static_cast<std::uint32_t>(node >> 32),
                       static_cast<std::uint32_t>(tag),
                       static_cast<std::uint32_t>(tag >> 32)};
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t node, std::string_view label) {
  auto seq = make_seq(master_seed, node, label);
  engine_.seed(seq);
}

RngStream rng_stream(std::uint64_t master_seed, std::uint64_t node, std::string_view label) {
  return RngStream(master_seed, node, label);
}

}  // namespace anonle
