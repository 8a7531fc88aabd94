#include "anonle/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <limits>
#include <mutex>
#include <thread>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "anonle/errors.hpp"

namespace anonle::harness {

namespace pt = boost::property_tree;

namespace {

// Line numbers of "section.key" entries, so errors found after parsing can
// still point at the source line.
std::map<std::string, std::size_t> key_lines(std::string_view text) {
  std::map<std::string, std::size_t> lines;
  std::istringstream in{std::string(text)};
  std::string line, section;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    boost::algorithm::trim(line);
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      boost::algorithm::trim(section);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    boost::algorithm::trim(key);
    lines[section + "." + key] = no;
  }
  return lines;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"experiment", {"protocol", "family", "sizes", "trials", "seed_base", "graph_seed", "threads"}},
      {"known_n", {"c", "x_multiplier", "strict_pseudocode"}},
      {"revocable", {"epsilon", "xi", "use_isoperimetric", "r_scale", "f_scale", "max_k"}},
      {"output", {"csv", "summary"}},
  };
  return keys;
}

template <class T>
T get_value(const pt::ptree& tree, const std::string& path, T fallback,
            const std::map<std::string, std::size_t>& lines) {
  auto node = tree.get_child_optional(pt::ptree::path_type(path, '.'));
  if (!node) return fallback;
  try {
    return node->get_value<T>();
  } catch (const pt::ptree_bad_data&) {
    auto it = lines.find(path);
    throw ParseError(it == lines.end() ? 0 : it->second,
                     "cannot parse value '" + node->data() + "' for " + path);
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mu = mean_of(v), acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::vector<std::string> revocable_flags(const revocable::RevocableOutcome& out) {
  std::vector<std::string> flags;
  if (out.final_leaders.empty()) flags.emplace_back("no_leader");
  if (out.final_leaders.size() > 1) flags.emplace_back("multiple_leaders");
  if (!out.unanimous) flags.emplace_back("not_unanimous");
  if (!out.stabilized) flags.emplace_back("not_stabilized");
  return flags;
}

TrialRow run_trial(const ExperimentSpec& spec, const PortGraph& g, const ProtocolInputs& in,
                   std::uint64_t seed) {
  TrialRow row;
  row.n = g.node_count();
  row.m = g.edge_count();
  row.seed = seed;
  const sim::RunMetrics* metrics = nullptr;
  known_n::ElectionOutcome kout;
  revocable::RevocableOutcome rout;
  if (spec.protocol == Protocol::known_n) {
    auto params = known_n::make_params(g.node_count(), in.phi, in.t_mix, spec.c, spec.x_multiplier);
    params.strict_pseudocode = spec.strict_pseudocode;
    known_n::ElectionOptions opts;
    opts.run.master_seed = seed;
    kout = known_n::elect_known_n(g, params, opts);
    row.leaders = kout.leaders.size();
    row.exactly_one = kout.exactly_one_leader();
    row.flags = kout.flags();
    metrics = &kout.metrics;
  } else {
    revocable::RevocableConfig cfg;
    cfg.epsilon = spec.epsilon;
    cfg.xi = spec.xi;
    if (spec.use_isoperimetric && in.isoperimetric) cfg.i_G = in.isoperimetric;
    cfg.r_scale = spec.r_scale;
    cfg.f_scale = spec.f_scale;
    cfg.max_k = spec.max_k;
    cfg.run.master_seed = seed;
    cfg.run.max_rounds = std::numeric_limits<std::uint64_t>::max();
    rout = revocable::run_revocable(g, cfg);
    row.leaders = rout.final_leaders.size();
    row.exactly_one = rout.exactly_one_leader;
    row.flags = revocable_flags(rout);
    metrics = &rout.metrics;
  }
  row.messages = metrics->messages_sent;
  row.bits = metrics->bits_sent;
  row.rounds = metrics->rounds_executed;
  row.accounted_rounds = metrics->accounted_rounds;
  return row;
}

std::string protocol_name(Protocol p) {
  return p == Protocol::known_n ? "known_n" : "revocable";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  boost::algorithm::split(cells, line, boost::algorithm::is_any_of(","));
  for (auto& c : cells) boost::algorithm::trim(c);
  return cells;
}

}  // namespace

ExperimentSpec parse_spec(std::string_view text) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.line(), e.message());
  }
  const auto lines = key_lines(text);
  for (const auto& [section, body] : tree) {
    auto sec = known_keys().find(section);
    if (sec == known_keys().end()) {
      throw ParseError(0, "unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (!sec->second.contains(key)) {
        auto it = lines.find(section + "." + key);
        throw ParseError(it == lines.end() ? 0 : it->second,
                         "unknown key '" + key + "' in [" + section + "]");
      }
    }
  }

  ExperimentSpec spec;
  auto proto = get_value<std::string>(tree, "experiment.protocol", "known_n", lines);
  if (proto == "known_n") {
    spec.protocol = Protocol::known_n;
  } else if (proto == "revocable") {
    spec.protocol = Protocol::revocable;
  } else {
    throw ParseError(lines.contains("experiment.protocol") ? lines.at("experiment.protocol") : 0,
                     "protocol must be known_n or revocable, got '" + proto + "'");
  }
  spec.family = get_value<std::string>(tree, "experiment.family", spec.family, lines);
  auto sizes = get_value<std::string>(tree, "experiment.sizes", "", lines);
  {
    std::vector<std::string> parts;
    boost::algorithm::split(parts, sizes, boost::algorithm::is_any_of(", "),
                            boost::algorithm::token_compress_on);
    std::size_t line = lines.contains("experiment.sizes") ? lines.at("experiment.sizes") : 0;
    for (const auto& p : parts) {
      if (p.empty()) continue;
      std::size_t used = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(p, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != p.size() || p[0] == '-') throw ParseError(line, "bad size '" + p + "'");
      spec.sizes.push_back(static_cast<std::size_t>(v));
    }
  }
  auto trials = get_value<long long>(tree, "experiment.trials", 1, lines);
  if (trials < 1) {
    throw ParseError(lines.contains("experiment.trials") ? lines.at("experiment.trials") : 0,
                     "trials must be at least 1");
  }
  spec.trials = static_cast<std::uint32_t>(trials);
  spec.seed_base = get_value<std::uint64_t>(tree, "experiment.seed_base", spec.seed_base, lines);
  spec.graph_seed = get_value<std::uint64_t>(tree, "experiment.graph_seed", spec.seed_base, lines);
  spec.threads = get_value<unsigned>(tree, "experiment.threads", spec.threads, lines);

  spec.c = get_value<std::uint32_t>(tree, "known_n.c", spec.c, lines);
  spec.x_multiplier = get_value<double>(tree, "known_n.x_multiplier", spec.x_multiplier, lines);
  spec.strict_pseudocode =
      get_value<bool>(tree, "known_n.strict_pseudocode", spec.strict_pseudocode, lines);

  spec.epsilon = get_value<double>(tree, "revocable.epsilon", spec.epsilon, lines);
  spec.xi = get_value<double>(tree, "revocable.xi", spec.xi, lines);
  spec.use_isoperimetric =
      get_value<bool>(tree, "revocable.use_isoperimetric", spec.use_isoperimetric, lines);
  spec.r_scale = get_value<double>(tree, "revocable.r_scale", spec.r_scale, lines);
  spec.f_scale = get_value<double>(tree, "revocable.f_scale", spec.f_scale, lines);
  if (tree.get_child_optional("revocable.max_k")) {
    spec.max_k = get_value<std::uint64_t>(tree, "revocable.max_k", 0, lines);
  }

  spec.csv_path = get_value<std::string>(tree, "output.csv", "", lines);
  spec.summary_path = get_value<std::string>(tree, "output.summary", "", lines);
  validate(spec);
  return spec;
}

ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open spec file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_spec(buf.str());
}

void validate(const ExperimentSpec& spec) {
  if (spec.sizes.empty()) throw InvalidParameter("experiment needs at least one size");
  if (spec.trials < 1) throw InvalidParameter("trials must be at least 1");
  for (auto n : spec.sizes) {
    if (n < 1) throw InvalidParameter("sizes must be positive");
  }
  if (spec.c < 1) throw InvalidParameter("c must be at least 1");
  if (!(spec.x_multiplier > 0.0)) throw InvalidParameter("x_multiplier must be positive");
  if (!(spec.epsilon > 0.0)) throw InvalidParameter("epsilon must be positive");
  if (!(spec.xi > 0.0 && spec.xi < 1.0)) throw InvalidParameter("xi must be in (0, 1)");
  if (!(spec.r_scale > 0.0) || !(spec.f_scale > 0.0)) {
    throw InvalidParameter("r_scale and f_scale must be positive");
  }
  if (spec.max_k && *spec.max_k < 2) throw InvalidParameter("max_k must be at least 2");
}

ProtocolInputs protocol_inputs(const PortGraph& g) {
  ProtocolInputs in;
  if (g.node_count() == 1) {
    in.phi = 1.0;
    in.t_mix = 1;
    return in;
  }
  GraphMetrics m = compute_metrics(g);
  in.phi = m.conductance;
  in.t_mix = std::max<std::uint64_t>(1, m.t_mix);
  in.exact = m.conductance_method == MethodTag::exact;
  if (m.isoperimetric_method == MethodTag::exact) in.isoperimetric = m.isoperimetric;
  return in;
}

std::string ExperimentResult::csv() const {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << protocol_name(spec.protocol) << ',' << spec.family << ',' << r.n << ',' << r.m << ','
        << r.seed << ',' << r.messages << ',' << r.bits << ',' << r.rounds << ','
        << r.accounted_rounds << ',' << r.leaders << ',' << (r.exactly_one ? 1 : 0) << ','
        << boost::algorithm::join(r.flags, ";") << '\n';
  }
  return out.str();
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  validate(spec);
  ExperimentResult result;
  result.spec = spec;
  nlohmann::json points = nlohmann::json::array();
  std::vector<std::pair<double, double>> fit_points;

  for (std::size_t n : spec.sizes) {
    PortGraph g = make_family(spec.family, n, spec.graph_seed);
    ProtocolInputs in = protocol_inputs(g);

    std::vector<TrialRow> rows(spec.trials);
    std::atomic<std::uint32_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
      for (std::uint32_t i = next++; i < spec.trials; i = next++) {
        try {
          rows[i] = run_trial(spec, g, in, spec.seed_base + i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    unsigned workers = std::clamp<unsigned>(spec.threads, 1, spec.trials);
    if (workers == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<double> msgs, bits, rounds, acc;
    std::map<std::string, std::uint32_t> flag_counts;
    std::uint32_t ok = 0;
    for (const auto& r : rows) {
      msgs.push_back(static_cast<double>(r.messages));
      bits.push_back(static_cast<double>(r.bits));
      rounds.push_back(static_cast<double>(r.rounds));
      acc.push_back(static_cast<double>(r.accounted_rounds));
      ok += r.exactly_one ? 1 : 0;
      for (const auto& f : r.flags) ++flag_counts[f];
    }
    nlohmann::json rates = nlohmann::json::object();
    for (const auto& [f, count] : flag_counts) rates[f] = static_cast<double>(count) / spec.trials;
    points.push_back({{"n", n},
                      {"m", g.edge_count()},
                      {"phi", in.phi},
                      {"phi_exact", in.exact},
                      {"t_mix", in.t_mix},
                      {"m_t_mix", static_cast<double>(g.edge_count()) * in.t_mix},
                      {"trials", spec.trials},
                      {"messages_mean", mean_of(msgs)},
                      {"messages_std", stddev_of(msgs)},
                      {"bits_mean", mean_of(bits)},
                      {"bits_std", stddev_of(bits)},
                      {"rounds_mean", mean_of(rounds)},
                      {"accounted_rounds_mean", mean_of(acc)},
                      {"success_rate", static_cast<double>(ok) / spec.trials},
                      {"failure_rates", rates}});
    fit_points.emplace_back(static_cast<double>(n), mean_of(msgs));
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }

  result.summary = {{"protocol", protocol_name(spec.protocol)},
                    {"family", spec.family},
                    {"trials", spec.trials},
                    {"seed_base", spec.seed_base},
                    {"graph_seed", spec.graph_seed},
                    {"points", points}};
  bool fittable = fit_points.size() >= 2 &&
                  std::all_of(fit_points.begin(), fit_points.end(),
                              [](const auto& p) { return p.first > 0 && p.second > 0; });
  if (fittable) {
    std::set<double> xs;
    for (const auto& p : fit_points) xs.insert(p.first);
    if (xs.size() >= 2) result.summary["messages_fit"] = scaling_fit(fit_points).to_json();
  }
  return result;
}

ExperimentResult run_experiment_to_files(const ExperimentSpec& spec) {
  ExperimentResult result = run_experiment(spec);
  if (!spec.csv_path.empty()) {
    std::ofstream out(spec.csv_path);
    if (!out) throw InvalidParameter("cannot write '" + spec.csv_path + "'");
    out << result.csv();
  }
  if (!spec.summary_path.empty()) {
    std::ofstream out(spec.summary_path);
    if (!out) throw InvalidParameter("cannot write '" + spec.summary_path + "'");
    out << result.summary.dump(2) << '\n';
  }
  return result;
}

nlohmann::json ScalingFit::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& [x, y] : points) pts.push_back({x, y});
  return {{"exponent", exponent}, {"intercept", intercept}, {"r2", r2}, {"points", pts}};
}

ScalingFit scaling_fit(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw InvalidParameter("a scaling fit needs at least two points");
  double sx = 0, sy = 0;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) {
      throw InvalidParameter("a scaling fit needs positive values");
    }
    sx += std::log(x);
    sy += std::log(y);
  }
  const double k = static_cast<double>(points.size());
  const double mx = sx / k, my = sy / k;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& [x, y] : points) {
    double dx = std::log(x) - mx, dy = std::log(y) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw InvalidParameter("a scaling fit needs at least two distinct x values");
  ScalingFit fit;
  fit.points = points;
  fit.exponent = sxy / sxx;
  fit.intercept = my - fit.exponent * mx;
  // A flat series is explained perfectly by slope zero.
  fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

ScalingFit fit_csv(std::string_view csv_text, const std::string& x_column,
                   const std::string& y_column) {
  std::istringstream in{std::string(csv_text)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty CSV");
  auto header = split_csv_line(line);
  auto col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError(1, "no column named '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t xi = col(x_column), yi = col(y_column);
  std::map<double, std::vector<double>> groups;
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (boost::algorithm::trim_copy(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() <= std::max(xi, yi)) throw ParseError(no, "too few columns");
    try {
      groups[std::stod(cells[xi])].push_back(std::stod(cells[yi]));
    } catch (const std::exception&) {
      throw ParseError(no, "non-numeric value");
    }
  }
  std::vector<std::pair<double, double>> points;
  for (const auto& [x, ys] : groups) points.emplace_back(x, mean_of(ys));
  return scaling_fit(points);
}

nlohmann::json PumpingReport::to_json() const {
  return {{"n_claimed", n_claimed},
          {"n_actual", n_actual},
          {"trials", trials},
          {"exactly_one", exactly_one},
          {"zero_leaders", zero_leaders},
          {"multiple_leaders", multiple_leaders},
          {"failure_frequency", failure_frequency()},
          {"params", params.to_json()}};
}

PumpingReport pumping_wheel_demo(std::size_t n_claimed, std::size_t n_actual,
                                 std::uint32_t trials, std::uint64_t seed, std::uint32_t c) {
  if (n_claimed < 3) throw InvalidParameter("the claimed cycle needs at least 3 nodes");
  if (n_actual < 4 * n_claimed) {
    throw InvalidParameter("the actual cycle must have at least 4 times the claimed size");
  }
  if (trials < 1) throw InvalidParameter("trials must be at least 1");
  PortGraph small = gen_cycle(n_claimed);
  ProtocolInputs in = protocol_inputs(small);

  PumpingReport report;
  report.n_claimed = n_claimed;
  report.n_actual = n_actual;
  report.trials = trials;
  report.params = known_n::make_params(n_claimed, in.phi, in.t_mix, c);

  PortGraph big = gen_cycle(n_actual);
  for (std::uint32_t i = 0; i < trials; ++i) {
    known_n::ElectionOptions opts;
    opts.run.master_seed = seed + i;
    auto out = known_n::elect_known_n(big, report.params, opts);
    if (out.leaders.size() == 1) {
      ++report.exactly_one;
    } else if (out.leaders.empty()) {
      ++report.zero_leaders;
    } else {
      ++report.multiple_leaders;
    }
  }
  return report;
}

std::string revocable_k_csv(const revocable::RevocableOutcome& out, std::uint64_t seed) {
  std::ostringstream csv;
  csv << "seed,k,s,r_k,f_k,leaders,ids_chosen,unanimous,stable_within,alarms,revocations,"
         "rounds_logical,rounds_accounted,messages,bits\n";
  for (const auto& snap : out.per_k) {
    csv << seed << ',' << snap.k << ',' << snap.schedule.s << ',' << snap.schedule.r_k << ','
        << snap.schedule.f_k << ',' << snap.leaders.size() << ',' << snap.ids_chosen << ','
        << (snap.unanimous ? 1 : 0) << ',' << (snap.stable_within ? 1 : 0) << ','
        << snap.alarms << ',' << snap.revocations << ',' << snap.rounds_logical << ','
        << snap.rounds_accounted << ',' << snap.messages << ',' << snap.bits << '\n';
  }
  return csv.str();
}

}  // namespace anonle::harness
