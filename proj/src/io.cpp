#include "flock/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace flock {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kScenarioKeys = {
    "name",     "n_agents", "R",        "h",          "D",        "v_d",
    "v_max",    "u_max",    "w1",       "w2",         "w3",       "horizon",
    "delta_t",  "dt",       "mode",     "duration",   "seed",     "explicit_states",
    "domain",   "margin",   "initial_speed", "metrics_window", "gradient_consistent_lambda_p", "safety_guard"};

[[noreturn]] void key_error(const std::string &key, const std::string &what) {
  throw std::invalid_argument(key + ": " + what);
}

double number(const json &doc, const std::string &key) {
  const json &v = doc.at(key);
  if (!v.is_number()) key_error(key, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) key_error(key, "must be finite");
  return x;
}

double number_or(const json &doc, const std::string &key, double fallback) {
  return doc.contains(key) ? number(doc, key) : fallback;
}

Vec2 vec(const json &v, const std::string &key) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    key_error(key, "expected [x, y]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

json vec_json(const Vec2 &v) { return json::array({v.x, v.y}); }

double parse_double(std::string_view field, std::size_t line) {
  double x = 0.0;
  const auto *end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, x);
  if (ec != std::errc() || ptr != end) {
    throw std::runtime_error("line " + std::to_string(line) + ": bad number '" +
                             std::string(field) + "'");
  }
  return x;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Rows after the header, with the header checked.
std::vector<std::vector<double>> parse_rows(const std::string &text, const std::string &header) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw std::runtime_error("expected header '" + header + "'");
  }
  const std::size_t width = split(header).size();
  std::vector<std::vector<double>> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != width) {
      throw std::runtime_error("line " + std::to_string(n) + ": expected " +
                               std::to_string(width) + " fields, got " +
                               std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(width);
    for (auto f : fields) row.push_back(parse_double(f, n));
    rows.push_back(std::move(row));
  }
  if (!text.empty() && text.back() != '\n') throw std::runtime_error("truncated final line");
  return rows;
}

constexpr const char *kTrajectoryHeader = "t,agent_id,px,py,vx,vy,ux,uy";
constexpr const char *kMetricsHeader = "t,mean_u,max_u,min_dist,flock_error";

}  // namespace

Scenario parse_scenario(const json &doc) {
  if (!doc.is_object()) throw std::invalid_argument("scenario: expected a JSON object");
  for (const auto &[key, _] : doc.items()) {
    if (!kScenarioKeys.contains(key)) key_error(key, "unknown key");
  }
  for (const char *key : {"R", "h", "D", "v_d"}) {
    if (!doc.contains(key)) key_error(key, "required key is missing");
  }

  Scenario s;
  FlockParams &p = s.params;
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) key_error("name", "expected a string");
    s.name = doc["name"].get<std::string>();
  }
  p.R = number(doc, "R");
  p.h = number(doc, "h");
  p.D = number(doc, "D");
  p.v_d = vec(doc["v_d"], "v_d");
  p.v_max = number_or(doc, "v_max", p.v_max);
  p.u_max = number_or(doc, "u_max", p.u_max);
  p.w1 = number_or(doc, "w1", 1.0);
  p.w2 = number_or(doc, "w2", 1.0);
  p.w3 = number_or(doc, "w3", 1.0);
  p.horizon = number_or(doc, "horizon", p.horizon);
  p.delta_t = number_or(doc, "delta_t", p.delta_t);
  p.dt = number_or(doc, "dt", p.dt);
  if (doc.contains("mode")) {
    if (!doc["mode"].is_string()) key_error("mode", "expected \"exchange\" or \"sensing\"");
    try {
      p.mode = planning_mode_from_string(doc["mode"].get<std::string>());
    } catch (const std::invalid_argument &) {
      key_error("mode", "expected \"exchange\" or \"sensing\"");
    }
  }
  if (doc.contains("gradient_consistent_lambda_p")) {
    if (!doc["gradient_consistent_lambda_p"].is_boolean()) {
      key_error("gradient_consistent_lambda_p", "expected a boolean");
    }
    p.gradient_consistent_lambda_p = doc["gradient_consistent_lambda_p"].get<bool>();
  }
  if (doc.contains("safety_guard")) {
    if (!doc["safety_guard"].is_boolean()) key_error("safety_guard", "expected a boolean");
    p.safety_guard = doc["safety_guard"].get<bool>();
  }
  s.duration = number_or(doc, "duration", s.duration);
  if (!(s.duration > 0.0)) key_error("duration", "must be positive");
  s.metrics_window = number_or(doc, "metrics_window", s.metrics_window);
  if (!(s.metrics_window > 0.0)) key_error("metrics_window", "must be positive");

  const bool has_states = doc.contains("explicit_states");
  if (has_states == doc.contains("domain")) {
    key_error(has_states ? "domain" : "explicit_states",
              "exactly one of explicit_states and domain must be given");
  }
  if (has_states) {
    const json &arr = doc["explicit_states"];
    if (!arr.is_array() || arr.empty()) key_error("explicit_states", "expected a nonempty array");
    std::vector<AgentState> states;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string key = "explicit_states[" + std::to_string(i) + "]";
      const json &e = arr[i];
      if (!e.is_object() || !e.contains("p")) key_error(key, "expected {\"p\": [x, y], \"v\": [x, y]}");
      states.push_back({vec(e["p"], key + ".p"), e.contains("v") ? vec(e["v"], key + ".v") : Vec2{}});
    }
    if (doc.contains("n_agents") && doc["n_agents"] != arr.size()) {
      key_error("n_agents", "does not match the number of explicit_states");
    }
    p.n_agents = states.size();
    s.explicit_states = std::move(states);
  } else {
    if (!doc.contains("n_agents")) key_error("n_agents", "required key is missing");
    const json &n = doc["n_agents"];
    if (!n.is_number_integer() || n.get<long long>() < 1) key_error("n_agents", "expected a positive integer");
    p.n_agents = n.get<std::size_t>();
    const json &dom = doc["domain"];
    if (!dom.is_object() || !dom.contains("min") || !dom.contains("max")) {
      key_error("domain", "expected {\"min\": [x, y], \"max\": [x, y]}");
    }
    s.random.box_min = vec(dom["min"], "domain.min");
    s.random.box_max = vec(dom["max"], "domain.max");
    if (doc.contains("seed")) {
      if (!doc["seed"].is_number_unsigned()) key_error("seed", "expected a nonnegative integer");
      s.random.seed = doc["seed"].get<std::uint64_t>();
    }
    s.random.margin = number_or(doc, "margin", s.random.margin);
    if (s.random.margin < 0.0) key_error("margin", "must be nonnegative");
    s.random.speed = number_or(doc, "initial_speed", s.random.speed);
  }

  validate(p);
  if (s.explicit_states) {
    init_scenario(s);  // checks the states themselves
  } else {
    if (!(s.random.box_max.x > s.random.box_min.x && s.random.box_max.y > s.random.box_min.y)) {
      key_error("domain", "max must exceed min in both coordinates");
    }
    if (s.random.speed < 0.0 || s.random.speed > p.v_max) {
      key_error("initial_speed", "must lie in [0, v_max]");
    }
  }
  return s;
}

Scenario load_scenario(const fs::path &path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  Scenario s = parse_scenario(doc);
  if (s.name.empty()) s.name = path.stem().string();
  return s;
}

json scenario_to_json(const Scenario &s) {
  const FlockParams &p = s.params;
  json out = {{"name", s.name},
              {"n_agents", p.n_agents},
              {"R", p.R},
              {"h", p.h},
              {"D", p.D},
              {"v_d", vec_json(p.v_d)},
              {"v_max", p.v_max},
              {"u_max", p.u_max},
              {"w1", p.w1},
              {"w2", p.w2},
              {"w3", p.w3},
              {"horizon", p.horizon},
              {"delta_t", p.delta_t},
              {"dt", p.dt},
              {"mode", to_string(p.mode)},
              {"gradient_consistent_lambda_p", p.gradient_consistent_lambda_p},
              {"safety_guard", p.safety_guard},
              {"duration", s.duration},
              {"metrics_window", s.metrics_window}};
  if (s.explicit_states) {
    json states = json::array();
    for (const auto &st : *s.explicit_states) {
      states.push_back({{"p", vec_json(st.p)}, {"v", vec_json(st.v)}});
    }
    out["explicit_states"] = std::move(states);
  } else {
    out["seed"] = s.random.seed;
    out["domain"] = {{"min", vec_json(s.random.box_min)}, {"max", vec_json(s.random.box_max)}};
    out["margin"] = s.random.margin;
    out["initial_speed"] = s.random.speed;
  }
  return out;
}

int log_precision() {
  const char *env = std::getenv(kPrecisionEnv);
  if (env == nullptr || *env == '\0') return kDefaultPrecision;
  int value = 0;
  const std::string_view text(env);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || value < 1 || value > 17) {
    throw std::invalid_argument(std::string(kPrecisionEnv) + ": expected an integer in [1, 17]");
  }
  return value;
}

std::string format_number(double x, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, x);
  return buf;
}

std::string trajectory_csv(const std::vector<StepRecord> &records, int precision) {
  std::string out = std::string(kTrajectoryHeader) + "\n";
  for (const StepRecord &r : records) {
    out += format_number(r.t, precision);
    out += ',' + std::to_string(r.id);
    for (double x : {r.state.p.x, r.state.p.y, r.state.v.x, r.state.v.y, r.u.x, r.u.y}) {
      out += ',' + format_number(x, precision);
    }
    out += '\n';
  }
  return out;
}

std::string metrics_csv(const std::vector<StepMetrics> &metrics, int precision) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const StepMetrics &m : metrics) {
    out += format_number(m.t, precision);
    for (double x : {m.mean_u, m.max_u, m.min_dist, m.flock_error}) {
      out += ',' + format_number(x, precision);
    }
    out += '\n';
  }
  return out;
}

std::vector<StepRecord> parse_trajectory_csv(const std::string &text) {
  const auto rows = parse_rows(text, kTrajectoryHeader);
  if (rows.empty()) throw std::runtime_error("trajectory log has no rows");
  std::vector<StepRecord> out;
  out.reserve(rows.size());
  for (const auto &r : rows) {
    if (r[1] < 0 || r[1] != std::floor(r[1])) throw std::runtime_error("agent_id must be a nonnegative integer");
    out.push_back({r[0], static_cast<AgentId>(r[1]), {{r[2], r[3]}, {r[4], r[5]}}, {r[6], r[7]}});
  }
  // Agent set of the first time defines the block layout.
  std::size_t n = 0;
  while (n < out.size() && out[n].t == out[0].t) ++n;
  if (out.size() % n != 0) throw std::runtime_error("trajectory log is truncated");
  for (std::size_t k = 0; k < out.size(); ++k) {
    const StepRecord &first = out[k - k % n];
    if (out[k].t != first.t || out[k].id != out[k % n].id) {
      throw std::runtime_error("trajectory log: inconsistent agent block at row " + std::to_string(k + 2));
    }
    if (k >= n && k % n == 0 && !(out[k].t > out[k - n].t)) {
      throw std::runtime_error("trajectory log: time not increasing at row " + std::to_string(k + 2));
    }
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string &text) {
  std::vector<MetricsRow> out;
  for (const auto &r : parse_rows(text, kMetricsHeader)) out.push_back({r[0], r[1], r[2], r[3], r[4]});
  return out;
}

std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path &path, const std::string &content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

json summary_json(const Scenario &scenario, const RunLog &log, const MetricsSummary &m) {
  const RunEvents &e = log.events;
  auto finite_or_null = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  return {
      {"artifact_version", kArtifactVersion},
      {"config", scenario_to_json(scenario)},
      {"steps", log.metrics.size()},
      {"events",
       {{"rounds", e.rounds},
        {"control_clips", e.control_clips},
        {"speed_clips", e.speed_clips},
        {"assumption3_breaches", e.assumption3_breaches},
        {"degraded_solves", e.degraded_solves},
        {"residual_risks", e.residual_risks},
        {"escapes", e.escapes},
        {"contacts", e.contacts},
        {"guard_activations", e.guard_activations},
        {"safety_faults", e.safety_faults}}},
      {"terminal",
       {{"window", scenario.metrics_window},
        {"mean_u", m.window_mean_u},
        {"max_u", m.window_max_u},
        {"min_dist", finite_or_null(m.window_min_dist)},
        {"flock_error", m.window_flock_error},
        {"speed_error", m.window_speed_error},
        {"initial_peak_max_u", m.initial_peak_max_u},
        {"min_dist_overall", finite_or_null(m.min_dist_overall)},
        {"logged_energy", m.logged_energy},
        {"nn_mean", m.nn_mean},
        {"nn_min", m.nn_min},
        {"nn_max", m.nn_max},
        {"mean_velocity", vec_json(m.final_mean_velocity)}}}};
}

RunFiles write_run(const fs::path &out_dir, const Scenario &scenario, const RunLog &log) {
  fs::create_directories(out_dir);
  const int precision = log_precision();
  const MetricsSummary m = metrics(log, scenario.metrics_window, scenario.params.v_d);
  RunFiles files{out_dir / "trajectory.csv", out_dir / "metrics.csv", out_dir / "summary.json"};
  write_atomic(files.trajectory, trajectory_csv(log.records, precision));
  write_atomic(files.metrics, metrics_csv(log.metrics, precision));
  write_atomic(files.summary, summary_json(scenario, log, m).dump(2) + "\n");
  return files;
}

std::vector<fs::path> emit_plotdata(const std::vector<StepRecord> &records, const fs::path &out_dir,
                                    const PlotDataOptions &options) {
  if (records.empty()) throw std::invalid_argument("emit_plotdata: empty trajectory log");
  fs::create_directories(out_dir);
  const int precision = log_precision();
  std::size_t n = 0;
  while (n < records.size() && records[n].t == records[0].t) ++n;
  const std::size_t steps = records.size() / n;
  auto block = [&](std::size_t k) { return records.begin() + static_cast<std::ptrdiff_t>(k * n); };
  std::vector<fs::path> written;

  const double t0 = records.front().t, t1 = records.back().t;
  for (std::size_t s = 0; s < options.snapshot_fractions.size(); ++s) {
    const double target = t0 + options.snapshot_fractions[s] * (t1 - t0);
    std::size_t best = 0;
    for (std::size_t k = 1; k < steps; ++k) {
      if (std::abs(block(k)->t - target) < std::abs(block(best)->t - target)) best = k;
    }
    std::string out = "t,agent_id,px,py\n";
    for (auto it = block(best); it != block(best) + static_cast<std::ptrdiff_t>(n); ++it) {
      out += format_number(it->t, precision) + ',' + std::to_string(it->id) + ',' +
             format_number(it->state.p.x, precision) + ',' + format_number(it->state.p.y, precision) + '\n';
    }
    written.push_back(out_dir / ("snapshot_" + std::to_string(s + 1) + ".csv"));
    write_atomic(written.back(), out);
  }

  std::string accel = "t,mean_u,max_u\n";
  for (std::size_t k = 0; k < steps; ++k) {
    double sum = 0.0, peak = 0.0;
    for (auto it = block(k); it != block(k) + static_cast<std::ptrdiff_t>(n); ++it) {
      const double mag = norm(it->u);
      sum += mag;
      peak = std::max(peak, mag);
    }
    accel += format_number(block(k)->t, precision) + ',' +
             format_number(sum / static_cast<double>(n), precision) + ',' +
             format_number(peak, precision) + '\n';
  }
  written.push_back(out_dir / "acceleration.csv");
  write_atomic(written.back(), accel);

  std::string hist = "bin_lo,bin_hi,count\n";
  if (n > 1 && options.histogram_bins > 0) {
    FlockSnapshot last;
    for (auto it = block(steps - 1); it != records.end(); ++it) last.states.push_back(it->state);
    const auto nn = nearest_neighbor_distances(last);
    const double hi = *std::max_element(nn.begin(), nn.end());
    const double width = hi > 0.0 ? hi / static_cast<double>(options.histogram_bins) : 1.0;
    std::vector<std::size_t> counts(options.histogram_bins, 0);
    for (double d : nn) {
      const auto b = std::min(options.histogram_bins - 1, static_cast<std::size_t>(d / width));
      ++counts[b];
    }
    for (std::size_t b = 0; b < counts.size(); ++b) {
      hist += format_number(b * width, precision) + ',' + format_number((b + 1) * width, precision) +
              ',' + std::to_string(counts[b]) + '\n';
    }
  }
  written.push_back(out_dir / "spacing_histogram.csv");
  write_atomic(written.back(), hist);
  return written;
}

}  // namespace flock
