#include "anonle/engine.hpp"

#include <sstream>

namespace anonle::sim {

namespace {

std::string violation_message(std::uint64_t round, NodeIndex node, Port port, std::uint8_t kind,
                              std::uint32_t bits, std::uint32_t budget) {
  std::ostringstream out;
  out << "bit budget exceeded in round " << round << " on link (node " << node << ", port "
      << port << "): payload kind " << static_cast<int>(kind) << " needs " << bits
      << " bits, budget is " << budget;
  return out.str();
}

}  // namespace

BudgetViolation::BudgetViolation(std::uint64_t round_, NodeIndex node_, Port port_,
                                 std::uint8_t kind_, std::uint32_t bits_, std::uint32_t budget_)
    : std::runtime_error(violation_message(round_, node_, port_, kind_, bits_, budget_)),
      round(round_),
      node(node_),
      port(port_),
      kind(kind_),
      bits(bits_),
      budget(budget_) {}

void write_trace_record(std::ostream& out, std::uint64_t round, NodeIndex node, Port port,
                        const LinkPayload& payload) {
  out << "{\"round\":" << round << ",\"from\":" << node << ",\"port\":" << port
      << ",\"kind\":" << static_cast<int>(payload.kind()) << ",\"bits\":" << payload.encoded_bits()
      << ",\"fields\":[";
  for (std::size_t i = 0; i < payload.field_count(); ++i) {
    out << (i ? "," : "") << "{\"value\":" << payload.field(i)
        << ",\"width\":" << static_cast<int>(payload.field_width(i)) << '}';
  }
  out << "],\"serial_bits\":" << payload.serial_width() << "}\n";
}

nlohmann::json RunMetrics::to_json() const {
  nlohmann::json j;
  j["rounds_executed"] = rounds_executed;
  j["accounted_rounds"] = accounted_rounds;
  j["messages_sent"] = messages_sent;
  j["bits_sent"] = bits_sent;
  j["framed_bits_sent"] = framed_bits_sent;
  j["max_framed_bits"] = max_framed_bits;
  j["max_budget"] = max_budget;
  nlohmann::json phase_json = nlohmann::json::object();
  for (const auto& [label, p] : phases) {
    phase_json[label] = {{"rounds", p.rounds}, {"messages", p.messages}, {"bits", p.bits}};
  }
  j["phases"] = std::move(phase_json);
  if (!whites_count.empty()) j["whites_count"] = whites_count;
  j["timed_out"] = timed_out;
  j["all_halted"] = all_halted;
  j["violations"] = violations;
  j["outcome"] = outcome;
  return j;
}

std::vector<std::string> check_accounting(const RunMetrics& metrics, std::size_t edge_count) {
  std::vector<std::string> problems;
  if (metrics.messages_sent > metrics.rounds_executed * 2 * edge_count) {
    problems.push_back("messages_sent exceeds rounds_executed * 2m");
  }
  if (metrics.framed_bits_sent > metrics.messages_sent * metrics.max_budget) {
    problems.push_back("framed bits exceed messages_sent * budget");
  }
  std::uint64_t phase_messages = 0;
  std::uint64_t phase_bits = 0;
  for (const auto& [label, p] : metrics.phases) {
    phase_messages += p.messages;
    phase_bits += p.bits;
  }
  if (phase_messages != metrics.messages_sent) problems.push_back("phase messages do not add up");
  if (phase_bits != metrics.bits_sent) problems.push_back("phase bits do not add up");
  return problems;
}

}  // namespace anonle::sim
