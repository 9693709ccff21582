#include "uwbloc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace uwbloc {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------- config parsing

using Path = std::vector<std::string>;

std::string join(const Path& path) {
  std::string s;
  for (const auto& p : path) {
    if (!p.empty() && p.front() == '[') {
      s += p;
    } else {
      s += (s.empty() ? "" : ".") + p;
    }
  }
  return s.empty() ? "<root>" : s;
}

// Finds the line of the last key in `path` by locating each key in turn.
std::size_t line_of(const std::string& text, const Path& path) {
  std::size_t pos = 0;
  bool found = false;
  for (const auto& key : path) {
    if (!key.empty() && key.front() == '[') continue;
    const auto hit = text.find('"' + key + '"', pos);
    if (hit == std::string::npos) break;
    pos = hit;
    found = true;
  }
  if (!found) return 0;
  return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n')) + 1;
}

class Reader {
 public:
  explicit Reader(const std::string& text) : text_(text) {}

  const std::string& text() const { return text_; }

  [[noreturn]] void fail(const Path& path, const std::string& msg) const {
    throw ConfigError(join(path) + ": " + msg, line_of(text_, path));
  }

  void expect_object(const json& j, const Path& path) const {
    if (!j.is_object()) fail(path, "expected an object");
  }

  void allow_keys(const json& obj, const Path& path, std::initializer_list<const char*> keys) const {
    for (const auto& [k, v] : obj.items()) {
      const bool known = std::any_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; });
      if (!known) fail(extend(path, k), "unknown field");
    }
  }

  const json* find(const json& obj, const std::string& key) const {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  const json& require(const json& obj, const Path& path, const std::string& key) const {
    const json* v = find(obj, key);
    if (!v) fail(extend(path, key), "missing required field");
    return *v;
  }

  double number(const json& v, const Path& path) const {
    if (!v.is_number()) fail(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "expected a finite number");
    return d;
  }

  double number(const json& obj, const Path& path, const std::string& key, double fallback) const {
    const json* v = find(obj, key);
    return v ? number(*v, extend(path, key)) : fallback;
  }

  std::int64_t integer(const json& v, const Path& path) const {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const json& v, const Path& path) const {
    if (!v.is_number_unsigned()) fail(path, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const json& obj, const Path& path, const std::string& key, bool fallback) const {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(extend(path, key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(const json& v, const Path& path) const {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
  }

  static Path extend(Path path, const std::string& key) {
    path.push_back(key);
    return path;
  }

 private:
  const std::string& text_;
};

Node parse_node(const Reader& rd, const json& j, const Path& path) {
  rd.expect_object(j, path);
  rd.allow_keys(j, path, {"id", "x_m", "y_m"});
  Node n;
  n.id = NodeId{static_cast<int>(rd.integer(rd.require(j, path, "id"), Reader::extend(path, "id")))};
  n.position.x = rd.number(rd.require(j, path, "x_m"), Reader::extend(path, "x_m"));
  n.position.y = rd.number(rd.require(j, path, "y_m"), Reader::extend(path, "y_m"));
  return n;
}

void parse_layout(const Reader& rd, const json& j, const Path& path, SystemLayout& layout) {
  rd.expect_object(j, path);
  rd.allow_keys(j, path, {"anchors", "sync", "tag_id", "bounds"});
  const Path anchors_path = Reader::extend(path, "anchors");
  const json& anchors = rd.require(j, path, "anchors");
  if (!anchors.is_array()) rd.fail(anchors_path, "expected an array");
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    layout.anchors.push_back(parse_node(rd, anchors[i], Reader::extend(anchors_path, "[" + std::to_string(i) + "]")));
  }
  layout.sync = parse_node(rd, rd.require(j, path, "sync"), Reader::extend(path, "sync"));
  layout.tag = NodeId{static_cast<int>(rd.integer(rd.require(j, path, "tag_id"), Reader::extend(path, "tag_id")))};
  const Path bpath = Reader::extend(path, "bounds");
  const json& b = rd.require(j, path, "bounds");
  rd.expect_object(b, bpath);
  rd.allow_keys(b, bpath, {"min_x_m", "max_x_m", "min_y_m", "max_y_m"});
  layout.bounds.min_x = rd.number(rd.require(b, bpath, "min_x_m"), Reader::extend(bpath, "min_x_m"));
  layout.bounds.max_x = rd.number(rd.require(b, bpath, "max_x_m"), Reader::extend(bpath, "max_x_m"));
  layout.bounds.min_y = rd.number(rd.require(b, bpath, "min_y_m"), Reader::extend(bpath, "min_y_m"));
  layout.bounds.max_y = rd.number(rd.require(b, bpath, "max_y_m"), Reader::extend(bpath, "max_y_m"));
}

ClockModel parse_clock_fields(const Reader& rd, const json& j, const Path& path) {
  ClockModel m;
  m.start_offset = rd.number(j, path, "start_offset_s", 0.0);
  m.skew = rd.number(j, path, "skew", 1.0);
  m.random_walk_sigma = rd.number(j, path, "random_walk_sigma_per_sqrt_s", 0.0);
  return m;
}

ExperimentConfig parse_config_json(const Reader& rd, const json& root) {
  const Path top;
  rd.expect_object(root, top);
  rd.allow_keys(root, top,
                {"schema_version", "protocol", "epochs", "seed", "layout", "start_time_s", "reply_floor_s",
                 "sync_interval_s", "range_delay_s", "range_delay_fraction", "twr_interval_s", "twr_tag_initiated",
                 "tick_period_s", "clocks", "clock_generator", "channel", "trajectory", "solver", "kalman",
                 "calibration", "report"});

  ExperimentConfig cfg;
  cfg.schema_version = static_cast<int>(rd.integer(rd.require(root, top, "schema_version"), {"schema_version"}));
  if (cfg.schema_version != kSchemaVersion) {
    rd.fail({"schema_version"}, "unsupported schema version " + std::to_string(cfg.schema_version));
  }
  const auto proto_name = rd.string(rd.require(root, top, "protocol"), {"protocol"});
  const auto proto = parse_protocol(proto_name);
  if (!proto) rd.fail({"protocol"}, "unknown protocol '" + proto_name + "'");
  cfg.protocol = *proto;

  ScenarioConfig& sc = cfg.scenario;
  sc.family = is_tdoa(cfg.protocol) ? ProtocolFamily::Tdoa : ProtocolFamily::Twr;
  sc.epochs = rd.integer(rd.require(root, top, "epochs"), {"epochs"});
  if (const json* s = rd.find(root, "seed")) sc.seed = rd.unsigned_integer(*s, {"seed"});
  parse_layout(rd, rd.require(root, top, "layout"), {"layout"}, sc.layout);

  sc.start_time_s = rd.number(root, top, "start_time_s", sc.start_time_s);
  sc.reply_floor_s = rd.number(root, top, "reply_floor_s", sc.reply_floor_s);
  sc.sync_interval_s = rd.number(root, top, "sync_interval_s", sc.sync_interval_s);
  if (const json* v = rd.find(root, "range_delay_s")) sc.range_delay_s = rd.number(*v, {"range_delay_s"});
  if (const json* v = rd.find(root, "range_delay_fraction")) {
    sc.range_delay_fraction = rd.number(*v, {"range_delay_fraction"});
  }
  sc.twr_interval_s = rd.number(root, top, "twr_interval_s", sc.twr_interval_s);
  sc.twr_tag_initiated = rd.boolean(root, top, "twr_tag_initiated", sc.twr_tag_initiated);
  sc.tick_period_s = rd.number(root, top, "tick_period_s", sc.tick_period_s);

  if (const json* clocks = rd.find(root, "clocks")) {
    if (!clocks->is_array()) rd.fail({"clocks"}, "expected an array");
    for (std::size_t i = 0; i < clocks->size(); ++i) {
      const Path p{"clocks", "[" + std::to_string(i) + "]"};
      const json& c = (*clocks)[i];
      rd.expect_object(c, p);
      rd.allow_keys(c, p, {"node", "start_offset_s", "skew", "random_walk_sigma_per_sqrt_s"});
      const NodeId id{static_cast<int>(rd.integer(rd.require(c, p, "node"), Reader::extend(p, "node")))};
      if (sc.clocks.contains(id)) rd.fail(Reader::extend(p, "node"), "duplicate clock entry");
      sc.clocks[id] = parse_clock_fields(rd, c, p);
    }
  }
  if (const json* g = rd.find(root, "clock_generator")) {
    const Path p{"clock_generator"};
    rd.expect_object(*g, p);
    rd.allow_keys(*g, p, {"skew_ppm_max", "start_offset_max_s", "random_walk_sigma_per_sqrt_s"});
    ClockGenerator gen;
    gen.skew_ppm_max = rd.number(*g, p, "skew_ppm_max", 0.0);
    gen.start_offset_max_s = rd.number(*g, p, "start_offset_max_s", 0.0);
    gen.random_walk_sigma_per_sqrt_s = rd.number(*g, p, "random_walk_sigma_per_sqrt_s", 0.0);
    cfg.clock_generator = gen;
  }
  if (const json* ch = rd.find(root, "channel")) {
    const Path p{"channel"};
    rd.expect_object(*ch, p);
    rd.allow_keys(*ch, p, {"timestamp_noise_sigma_s", "drop_probability", "near_anchor_bias"});
    sc.channel.timestamp_noise_sigma = rd.number(*ch, p, "timestamp_noise_sigma_s", 0.0);
    sc.channel.drop_probability = rd.number(*ch, p, "drop_probability", 0.0);
    if (const json* nb = rd.find(*ch, "near_anchor_bias")) {
      const Path q = Reader::extend(p, "near_anchor_bias");
      rd.expect_object(*nb, q);
      rd.allow_keys(*nb, q, {"radius_m", "bias_s"});
      NearAnchorBias bias;
      bias.radius_m = rd.number(*nb, q, "radius_m", bias.radius_m);
      bias.bias_s = rd.number(*nb, q, "bias_s", 0.0);
      sc.channel.near_anchor_bias = bias;
    }
  }
  {
    const Path p{"trajectory"};
    const json& t = rd.require(root, top, "trajectory");
    rd.expect_object(t, p);
    rd.allow_keys(t, p, {"waypoints_m", "speed_mps", "max_speed_mps"});
    const Path wp = Reader::extend(p, "waypoints_m");
    const json& w = rd.require(t, p, "waypoints_m");
    if (!w.is_array() || w.empty()) rd.fail(wp, "expected a non-empty array of [x, y] pairs");
    for (const auto& pt : w) {
      if (!pt.is_array() || pt.size() != 2) rd.fail(wp, "each waypoint must be [x, y]");
      sc.trajectory.waypoints.push_back({rd.number(pt[0], wp), rd.number(pt[1], wp)});
    }
    sc.trajectory.speed_mps = rd.number(t, p, "speed_mps", 0.0);
    sc.max_speed_mps = rd.number(t, p, "max_speed_mps", sc.max_speed_mps);
    sc.layout.tag_start = sc.trajectory.waypoints.front();
  }
  if (const json* s = rd.find(root, "solver")) {
    const Path p{"solver"};
    rd.expect_object(*s, p);
    rd.allow_keys(*s, p, {"method", "use_prior"});
    if (const json* m = rd.find(*s, "method")) {
      const auto name = rd.string(*m, Reader::extend(p, "method"));
      const auto method = parse_solve_method(name);
      if (!method) rd.fail(Reader::extend(p, "method"), "unknown solver method '" + name + "'");
      cfg.method = *method;
    }
    cfg.use_prior = rd.boolean(*s, p, "use_prior", cfg.use_prior);
  }
  if (const json* k = rd.find(root, "kalman")) {
    const Path p{"kalman"};
    rd.expect_object(*k, p);
    rd.allow_keys(*k, p, {"sigma2_t_ns2", "sigma2_m", "p0_t_ns2", "p0_m", "process", "wiener_q_per_s"});
    cfg.kalman.sigma2_t_ns2 = rd.number(*k, p, "sigma2_t_ns2", cfg.kalman.sigma2_t_ns2);
    cfg.kalman.sigma2_m = rd.number(*k, p, "sigma2_m", cfg.kalman.sigma2_m);
    cfg.kalman.p0_t_ns2 = rd.number(*k, p, "p0_t_ns2", cfg.kalman.p0_t_ns2);
    cfg.kalman.p0_m = rd.number(*k, p, "p0_m", cfg.kalman.p0_m);
    if (const json* pr = rd.find(*k, "process")) {
      const auto name = rd.string(*pr, Reader::extend(p, "process"));
      if (name == "diagonal") {
        cfg.kalman.process = ProcessNoiseModel::Diagonal;
      } else if (name == "wiener") {
        cfg.kalman.process = ProcessNoiseModel::Wiener;
      } else {
        rd.fail(Reader::extend(p, "process"), "expected 'diagonal' or 'wiener'");
      }
    }
    cfg.kalman.wiener_q = rd.number(*k, p, "wiener_q_per_s", cfg.kalman.wiener_q);
  }
  if (const json* c = rd.find(root, "calibration")) {
    const Path p{"calibration"};
    rd.expect_object(*c, p);
    rd.allow_keys(*c, p, {"slope", "offset_m"});
    CalibrationModel model;
    model.slope = rd.number(rd.require(*c, p, "slope"), Reader::extend(p, "slope"));
    model.offset = rd.number(rd.require(*c, p, "offset_m"), Reader::extend(p, "offset_m"));
    cfg.calibration = model;
  }
  if (const json* r = rd.find(root, "report")) {
    const Path p{"report"};
    rd.expect_object(*r, p);
    rd.allow_keys(*r, p, {"thresholds_m"});
    if (const json* th = rd.find(*r, "thresholds_m")) {
      const Path q = Reader::extend(p, "thresholds_m");
      if (!th->is_array()) rd.fail(q, "expected an array");
      cfg.thresholds_m.clear();
      for (const auto& v : *th) cfg.thresholds_m.push_back(rd.number(v, q));
    }
  }

  // Validation messages start with the dotted field path; anchor them on it.
  try {
    cfg.validate();
  } catch (const Error& e) {
    std::string msg = e.what();
    const std::string prefix = std::string(to_string(ErrorCode::ConfigError)) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    Path path;
    const auto colon = msg.find(": ");
    if (colon != std::string::npos && msg.find(' ') > colon) {
      std::stringstream ss(msg.substr(0, colon));
      for (std::string part; std::getline(ss, part, '.');) path.push_back(part);
    }
    throw ConfigError(msg, line_of(rd.text(), path));
  }
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------- names

std::string_view to_string(Protocol protocol) {
  switch (protocol) {
    case Protocol::TwrSingle: return "twr_single";
    case Protocol::TwrSds: return "twr_sds";
    case Protocol::TdoaRaw: return "tdoa_raw";
    case Protocol::TdoaKalman: return "tdoa_kalman";
  }
  return "unknown";
}

std::optional<Protocol> parse_protocol(std::string_view name) {
  for (auto p : {Protocol::TwrSingle, Protocol::TwrSds, Protocol::TdoaRaw, Protocol::TdoaKalman}) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

std::string_view to_string(FixStatus status) {
  switch (status) {
    case FixStatus::Ok: return "ok";
    case FixStatus::Incomplete: return "incomplete";
    case FixStatus::InsufficientHistory: return "insufficient_history";
    case FixStatus::Failed: return "failed";
    case FixStatus::Ambiguous: return "ambiguous";
  }
  return "unknown";
}

std::optional<FixStatus> parse_fix_status(std::string_view name) {
  for (auto s : {FixStatus::Ok, FixStatus::Incomplete, FixStatus::InsufficientHistory, FixStatus::Failed,
                 FixStatus::Ambiguous}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- config

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& msg) {
  throw Error(ErrorCode::ConfigError, field + ": " + msg);
}

}  // namespace

void ExperimentConfig::validate() const {
  const ScenarioConfig& sc = scenario;
  if (schema_version != kSchemaVersion) invalid("schema_version", "unsupported schema version");
  if (sc.epochs < 1) invalid("epochs", "must be at least 1");
  if (!(sc.tick_period_s > 0.0)) invalid("tick_period_s", "must be positive");
  if (!(sc.reply_floor_s >= 0.0)) invalid("reply_floor_s", "must be non-negative");
  if (!(sc.start_time_s >= 0.0)) invalid("start_time_s", "must be non-negative");
  if (!(sc.channel.timestamp_noise_sigma >= 0.0)) invalid("channel.timestamp_noise_sigma_s", "must be non-negative");
  if (!(sc.channel.drop_probability >= 0.0 && sc.channel.drop_probability <= 1.0)) {
    invalid("channel.drop_probability", "must lie in [0, 1]");
  }
  if (sc.channel.near_anchor_bias && !(sc.channel.near_anchor_bias->radius_m >= 0.0)) {
    invalid("channel.near_anchor_bias.radius_m", "must be non-negative");
  }
  for (const auto& [id, model] : sc.clocks) {
    if (!sc.layout.role_of(id)) invalid("clocks", "clock given for unknown node " + std::to_string(id.value));
    if (!(model.skew > 0.0)) invalid("clocks", "skew must be positive");
    if (!(model.start_offset >= 0.0)) invalid("clocks", "start offset must be non-negative");
    if (!(model.random_walk_sigma >= 0.0)) invalid("clocks", "random walk sigma must be non-negative");
  }
  if (clock_generator) {
    const auto& g = *clock_generator;
    if (!(g.skew_ppm_max >= 0.0 && g.skew_ppm_max < 1e5)) invalid("clock_generator.skew_ppm_max", "must lie in [0, 1e5)");
    if (!(g.start_offset_max_s >= 0.0)) invalid("clock_generator.start_offset_max_s", "must be non-negative");
    if (!(g.random_walk_sigma_per_sqrt_s >= 0.0)) {
      invalid("clock_generator.random_walk_sigma_per_sqrt_s", "must be non-negative");
    }
  }
  if (sc.trajectory.waypoints.empty()) invalid("trajectory.waypoints_m", "needs at least one waypoint");
  if (!(sc.trajectory.speed_mps >= 0.0)) invalid("trajectory.speed_mps", "must be non-negative");
  if (sc.trajectory.speed_mps > sc.max_speed_mps) {
    invalid("trajectory.speed_mps", "exceeds the configured maximum of " + std::to_string(sc.max_speed_mps) + " m/s");
  }
  if (!sc.layout.bounds.valid()) invalid("layout.bounds", "min must be below max on both axes");
  for (const auto& w : sc.trajectory.waypoints) {
    if (!sc.layout.bounds.contains(w)) invalid("trajectory.waypoints_m", "waypoint lies outside the layout bounds");
  }
  if (sc.range_delay_s && sc.range_delay_fraction) {
    invalid("range_delay_fraction", "give either range_delay_s or range_delay_fraction, not both");
  }
  if (is_tdoa(protocol)) {
    if (!(sc.sync_interval_s > 0.0)) invalid("sync_interval_s", "must be positive");
    if (sc.range_delay_fraction && !(*sc.range_delay_fraction >= 0.0 && *sc.range_delay_fraction < 1.0)) {
      invalid("range_delay_fraction", "must lie in [0, 1)");
    }
    if (sc.tdoa_range_delay() + 2.0 * sc.reply_floor_s + 1e-6 >= sc.sync_interval_s) {
      invalid(sc.range_delay_s ? "range_delay_s" : "sync_interval_s", "the RANGE does not fit inside the sync interval");
    }
  } else {
    if (!(sc.twr_interval_s > 0.0)) invalid("twr_interval_s", "must be positive");
    if (sc.twr_slot_s() * static_cast<double>(sc.layout.anchors.size()) > sc.twr_interval_s) {
      invalid("twr_interval_s", "one ranging round over all anchors does not fit");
    }
  }
  if (!(kalman.sigma2_t_ns2 > 0.0 && kalman.sigma2_m > 0.0 && kalman.p0_t_ns2 > 0.0 && kalman.p0_m > 0.0)) {
    invalid("kalman", "variances must be positive");
  }
  if (!(kalman.wiener_q >= 0.0)) invalid("kalman.wiener_q_per_s", "must be non-negative");
  if (calibration && !(calibration->slope != 0.0)) invalid("calibration.slope", "must be non-zero");
  if (thresholds_m.empty()) invalid("report.thresholds_m", "needs at least one threshold");
  for (double t : thresholds_m) {
    if (!(t > 0.0)) invalid("report.thresholds_m", "thresholds must be positive");
  }
  try {
    sc.layout.validate(is_tdoa(protocol) ? 2 : 1);
  } catch (const Error& e) {
    std::string msg = e.what();
    const std::string prefix = std::string(to_string(e.code())) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    invalid("layout", msg);
  }
}

ScenarioConfig ExperimentConfig::resolved_scenario() const {
  ScenarioConfig sc = scenario;
  if (!clock_generator) return sc;
  std::mt19937_64 rng(derive_seed(sc.seed, 0xC10C6E11ULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<NodeId> nodes;
  for (const auto& a : sc.layout.anchors) nodes.push_back(a.id);
  nodes.push_back(sc.layout.sync.id);
  nodes.push_back(sc.layout.tag);
  for (const auto& id : nodes) {
    // Draw for every node so adding an explicit clock leaves the others unchanged.
    ClockModel m;
    m.skew = 1.0 + (2.0 * unit(rng) - 1.0) * clock_generator->skew_ppm_max * 1e-6;
    m.start_offset = unit(rng) * clock_generator->start_offset_max_s;
    m.random_walk_sigma = clock_generator->random_walk_sigma_per_sqrt_s;
    sc.clocks.try_emplace(id, m);
  }
  return sc;
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto byte = std::min<std::size_t>(e.byte, text.size());
    const auto line =
        static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n')) + 1;
    throw ConfigError(std::string("malformed JSON: ") + e.what(), line);
  }
  const Reader rd(text);
  return parse_config_json(rd, root);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string(), 0);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

json node_json(const Node& n) { return {{"id", n.id.value}, {"x_m", n.position.x}, {"y_m", n.position.y}}; }

json config_json(const ExperimentConfig& cfg) {
  const ScenarioConfig& sc = cfg.scenario;
  json j;
  j["schema_version"] = cfg.schema_version;
  j["protocol"] = std::string(to_string(cfg.protocol));
  j["epochs"] = sc.epochs;
  j["seed"] = sc.seed;
  json anchors = json::array();
  for (const auto& a : sc.layout.anchors) anchors.push_back(node_json(a));
  j["layout"] = {{"anchors", anchors},
                 {"sync", node_json(sc.layout.sync)},
                 {"tag_id", sc.layout.tag.value},
                 {"bounds",
                  {{"min_x_m", sc.layout.bounds.min_x},
                   {"max_x_m", sc.layout.bounds.max_x},
                   {"min_y_m", sc.layout.bounds.min_y},
                   {"max_y_m", sc.layout.bounds.max_y}}}};
  j["start_time_s"] = sc.start_time_s;
  j["reply_floor_s"] = sc.reply_floor_s;
  j["sync_interval_s"] = sc.sync_interval_s;
  if (sc.range_delay_s) j["range_delay_s"] = *sc.range_delay_s;
  if (sc.range_delay_fraction) j["range_delay_fraction"] = *sc.range_delay_fraction;
  j["twr_interval_s"] = sc.twr_interval_s;
  j["twr_tag_initiated"] = sc.twr_tag_initiated;
  j["tick_period_s"] = sc.tick_period_s;
  json clocks = json::array();
  for (const auto& [id, m] : sc.clocks) {
    clocks.push_back({{"node", id.value},
                      {"start_offset_s", m.start_offset},
                      {"skew", m.skew},
                      {"random_walk_sigma_per_sqrt_s", m.random_walk_sigma}});
  }
  j["clocks"] = clocks;
  if (cfg.clock_generator) {
    j["clock_generator"] = {{"skew_ppm_max", cfg.clock_generator->skew_ppm_max},
                            {"start_offset_max_s", cfg.clock_generator->start_offset_max_s},
                            {"random_walk_sigma_per_sqrt_s", cfg.clock_generator->random_walk_sigma_per_sqrt_s}};
  }
  json channel = {{"timestamp_noise_sigma_s", sc.channel.timestamp_noise_sigma},
                  {"drop_probability", sc.channel.drop_probability}};
  if (sc.channel.near_anchor_bias) {
    channel["near_anchor_bias"] = {{"radius_m", sc.channel.near_anchor_bias->radius_m},
                                   {"bias_s", sc.channel.near_anchor_bias->bias_s}};
  }
  j["channel"] = channel;
  json waypoints = json::array();
  for (const auto& w : sc.trajectory.waypoints) waypoints.push_back({w.x, w.y});
  j["trajectory"] = {{"waypoints_m", waypoints},
                     {"speed_mps", sc.trajectory.speed_mps},
                     {"max_speed_mps", sc.max_speed_mps}};
  j["solver"] = {{"method", std::string(to_string(cfg.method))}, {"use_prior", cfg.use_prior}};
  j["kalman"] = {{"sigma2_t_ns2", cfg.kalman.sigma2_t_ns2},
                 {"sigma2_m", cfg.kalman.sigma2_m},
                 {"p0_t_ns2", cfg.kalman.p0_t_ns2},
                 {"p0_m", cfg.kalman.p0_m},
                 {"process", cfg.kalman.process == ProcessNoiseModel::Wiener ? "wiener" : "diagonal"},
                 {"wiener_q_per_s", cfg.kalman.wiener_q}};
  if (cfg.calibration) {
    j["calibration"] = {{"slope", cfg.calibration->slope}, {"offset_m", cfg.calibration->offset}};
  }
  j["report"] = {{"thresholds_m", cfg.thresholds_m}};
  return j;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& config) { return config_json(config).dump(2) + "\n"; }

std::uint64_t config_hash(const ExperimentConfig& config) {
  const std::string text = config_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

EventTrace simulate(const ExperimentConfig& config) {
  config.validate();
  return run_scenario(config.resolved_scenario());
}

// ---------------------------------------------------------------- localization

namespace {

struct Stamp {
  TrueTime time;
  double device_s = 0.0;
};

using TxKey = std::tuple<std::int64_t, NodeId, MessageKind>;
using RxKey = std::tuple<std::int64_t, MessageKind, NodeId, NodeId>;  // epoch, kind, sender, receiver

// Latest transmission of `kind` by `sender` no later than `before`.
std::optional<Stamp> tx_before(const std::map<TxKey, std::vector<Stamp>>& tx, std::int64_t epoch, NodeId sender,
                               MessageKind kind, TrueTime before) {
  const auto it = tx.find({epoch, sender, kind});
  if (it == tx.end()) return std::nullopt;
  std::optional<Stamp> best;
  for (const auto& s : it->second) {
    if (s.time <= before && (!best || s.time > best->time)) best = s;
  }
  return best;
}

std::optional<Stamp> rx_of(const std::map<RxKey, Stamp>& rx, std::int64_t epoch, MessageKind kind, NodeId sender,
                           NodeId receiver) {
  const auto it = rx.find({epoch, kind, sender, receiver});
  if (it == rx.end()) return std::nullopt;
  return it->second;
}

PositionRow row_from_solution(std::int64_t epoch, double t_s, Position truth, const SolveResult& s) {
  PositionRow row;
  row.epoch = epoch;
  row.t_s = t_s;
  row.truth = truth;
  row.estimate = s.position;
  row.residual = s.residual_norm;
  row.iterations = s.iterations;
  row.wall_time_us = s.wall_time * 1e6;
  row.status = s.ambiguous ? FixStatus::Ambiguous : FixStatus::Ok;
  return row;
}

PositionRow failed_row(std::int64_t epoch, double t_s, Position truth, FixStatus status) {
  PositionRow row;
  row.epoch = epoch;
  row.t_s = t_s;
  row.truth = truth;
  row.status = status;
  row.estimate = {std::nan(""), std::nan("")};
  row.residual = std::nan("");
  return row;
}

FixStatus status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::IncompleteEpoch:
    case ErrorCode::MissingSyncRx:
      return FixStatus::Incomplete;
    case ErrorCode::InsufficientHistory:
      return FixStatus::InsufficientHistory;
    case ErrorCode::AmbiguousSolution:
      return FixStatus::Ambiguous;
    default:
      return FixStatus::Failed;
  }
}

std::vector<PositionRow> localize_tdoa(const EventTrace& trace, const ExperimentConfig& cfg) {
  const ScenarioConfig& sc = cfg.scenario;
  TdoaOptions options;
  options.mode = cfg.protocol == Protocol::TdoaKalman ? TdoaMode::Kalman : TdoaMode::Raw;
  options.kalman = cfg.kalman;
  TdoaState state;
  std::optional<Position> prior;
  std::vector<PositionRow> rows;
  for (const auto& rec : assemble_tdoa_epochs(trace, sc.layout)) {
    const double t_s = rec.range_tx_true ? rec.range_tx_true->seconds()
                                         : sc.start_time_s + static_cast<double>(rec.epoch) * sc.sync_interval_s;
    const Position truth = sc.trajectory.at(t_s);
    EpochResult er = process_epoch(state, rec.sync, rec.range, sc.layout, options);
    state = std::move(er.next);
    if (!rec.range_tx_true) {
      rows.push_back(failed_row(rec.epoch, t_s, truth, FixStatus::Incomplete));
      continue;
    }
    if (er.failure) {
      rows.push_back(failed_row(rec.epoch, t_s, truth, status_of(*er.failure)));
      continue;
    }
    SolveRequest req{sc.layout, er.measurements, cfg.use_prior ? prior : std::nullopt, sc.layout.bounds};
    try {
      const SolveResult s = solve_tdoa(req, cfg.method);
      rows.push_back(row_from_solution(rec.epoch, t_s, truth, s));
      if (!s.ambiguous) prior = s.position;
    } catch (const Error& e) {
      rows.push_back(failed_row(rec.epoch, t_s, truth, status_of(e.code())));
    }
  }
  return rows;
}

struct TwrIndex {
  std::map<TxKey, std::vector<Stamp>> tx;
  std::map<RxKey, Stamp> rx;
  std::map<std::int64_t, TrueTime> last_tag_tx;
};

TwrIndex index_twr(const EventTrace& trace, NodeId tag) {
  TwrIndex idx;
  for (const auto& e : trace.events) {
    if (!e.ticks) continue;
    const Stamp s{e.time, DeviceTime{*e.ticks, trace.tick_period}.seconds()};
    if (e.type == TraceEventType::Tx) {
      idx.tx[{e.epoch, e.sender, e.kind}].push_back(s);
      if (e.sender == tag && e.kind != MessageKind::RangeReport) {
        auto& last = idx.last_tag_tx[e.epoch];
        last = std::max(last, e.time);
      }
    } else if (e.type == TraceEventType::Rx && e.receiver) {
      idx.rx[{e.epoch, e.kind, e.sender, *e.receiver}] = s;
    }
  }
  return idx;
}

}  // namespace

std::map<std::int64_t, std::vector<RangeMeasurement>> twr_ranges(const EventTrace& trace,
                                                                 const ExperimentConfig& cfg) {
  const ScenarioConfig& sc = cfg.scenario;
  const NodeId tag = sc.layout.tag;
  const TwrIndex idx = index_twr(trace, tag);
  std::set<std::int64_t> epochs;
  for (const auto& [key, stamps] : idx.tx) epochs.insert(std::get<0>(key));
  std::map<std::int64_t, std::vector<RangeMeasurement>> out;
  for (const auto epoch : epochs) {
    auto& list = out[epoch];
    for (const auto& anchor : sc.layout.anchors) {
      const NodeId init = sc.twr_tag_initiated ? tag : anchor.id;
      const NodeId resp = sc.twr_tag_initiated ? anchor.id : tag;
      const auto poll_rx = rx_of(idx.rx, epoch, MessageKind::Poll, init, resp);
      const auto ack_rx = rx_of(idx.rx, epoch, MessageKind::PollAck, resp, init);
      if (!poll_rx || !ack_rx) continue;
      const auto poll_tx = tx_before(idx.tx, epoch, init, MessageKind::Poll, poll_rx->time);
      const auto ack_tx = tx_before(idx.tx, epoch, resp, MessageKind::PollAck, ack_rx->time);
      if (!poll_tx || !ack_tx) continue;
      double tof = 0.0;
      if (cfg.protocol == Protocol::TwrSingle) {
        TwrExchange ex;
        ex.t_round1 = ack_rx->device_s - poll_tx->device_s;
        ex.t_reply1 = ack_tx->device_s - poll_rx->device_s;
        tof = single_sided_tof(ex);
      } else {
        const auto final_rx = rx_of(idx.rx, epoch, MessageKind::RangeFinal, init, resp);
        if (!final_rx) continue;
        const auto final_tx = tx_before(idx.tx, epoch, init, MessageKind::RangeFinal, final_rx->time);
        if (!final_tx) continue;
        tof = sds_tof(TwrExchange::from_timestamps(poll_tx->device_s, poll_rx->device_s, ack_tx->device_s,
                                                   ack_rx->device_s, final_tx->device_s, final_rx->device_s));
      }
      RangeMeasurement m;
      m.anchor = anchor.id;
      m.epoch = epoch;
      m.range = tof_to_range(tof);
      if (cfg.calibration) {
        const auto cal = apply_calibration(*cfg.calibration, m.range);
        m.range = cal.range;
        m.clamped = cal.clamped;
      }
      list.push_back(m);
    }
  }
  return out;
}

namespace {

std::vector<PositionRow> localize_twr(const EventTrace& trace, const ExperimentConfig& cfg) {
  const ScenarioConfig& sc = cfg.scenario;
  const TwrIndex idx = index_twr(trace, sc.layout.tag);
  std::optional<Position> prior;
  std::vector<PositionRow> rows;
  for (const auto& [epoch, ranges] : twr_ranges(trace, cfg)) {
    const auto last = idx.last_tag_tx.find(epoch);
    const double t_s = last != idx.last_tag_tx.end()
                           ? last->second.seconds()
                           : sc.start_time_s + static_cast<double>(epoch) * sc.twr_interval_s;
    const Position truth = sc.trajectory.at(t_s);
    if (ranges.size() < sc.layout.anchors.size() || ranges.size() < 2) {
      rows.push_back(failed_row(epoch, t_s, truth, FixStatus::Incomplete));
      continue;
    }
    SolveRequest req{sc.layout, ranges, cfg.use_prior ? prior : std::nullopt, sc.layout.bounds};
    try {
      const SolveResult s = solve_twr(req, cfg.method);
      rows.push_back(row_from_solution(epoch, t_s, truth, s));
      if (!s.ambiguous) prior = s.position;
    } catch (const Error& e) {
      rows.push_back(failed_row(epoch, t_s, truth, status_of(e.code())));
    }
  }
  return rows;
}

}  // namespace

std::vector<PositionRow> localize(const EventTrace& trace, const ExperimentConfig& config) {
  return is_tdoa(config.protocol) ? localize_tdoa(trace, config) : localize_twr(trace, config);
}

// ---------------------------------------------------------------- CSV

void write_positions_csv(std::ostream& out, const std::vector<PositionRow>& rows) {
  out << "epoch,status,t_s,x,y,residual,iterations,wall_time_us,true_x,true_y\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.epoch << ',' << to_string(r.status) << ',' << r.t_s << ',';
    if (r.status == FixStatus::Ok || r.status == FixStatus::Ambiguous) {
      out << r.estimate.x << ',' << r.estimate.y << ',' << r.residual << ',';
    } else {
      out << ",,,";
    }
    out << r.iterations << ',' << std::fixed << std::setprecision(3) << r.wall_time_us << std::defaultfloat
        << std::setprecision(17) << ',' << r.truth.x << ',' << r.truth.y << '\n';
  }
}

std::vector<PositionRow> read_positions_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::InvalidArgument, "positions CSV is empty");
  std::vector<PositionRow> rows;
  std::size_t line_no = 1;
  const auto num = [](const std::string& s) { return s.empty() ? std::nan("") : std::stod(s); };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 10) {
      throw Error(ErrorCode::InvalidArgument, "positions CSV line " + std::to_string(line_no) + " has " +
                                                  std::to_string(f.size()) + " fields, expected 10");
    }
    try {
      PositionRow r;
      r.epoch = std::stoll(f[0]);
      const auto status = parse_fix_status(f[1]);
      if (!status) throw std::invalid_argument("status");
      r.status = *status;
      r.t_s = num(f[2]);
      r.estimate = {num(f[3]), num(f[4])};
      r.residual = num(f[5]);
      r.iterations = std::stoi(f[6]);
      r.wall_time_us = num(f[7]);
      r.truth = {num(f[8]), num(f[9])};
      rows.push_back(r);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "positions CSV line " + std::to_string(line_no) + " is malformed");
    }
  }
  return rows;
}

// ---------------------------------------------------------------- report

double pct_within(const std::vector<double>& errors, double threshold) {
  if (errors.empty()) return 0.0;
  const auto n = std::count_if(errors.begin(), errors.end(), [&](double e) { return e <= threshold; });
  return 100.0 * static_cast<double>(n) / static_cast<double>(errors.size());
}

namespace {

double quantile(std::vector<double> sorted, double q) {
  if (sorted.empty()) return std::nan("");
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

AccuracyReport make_report(const std::vector<PositionRow>& rows, const std::vector<double>& thresholds) {
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "no position rows to report on");
  AccuracyReport rep;
  rep.thresholds_m = thresholds;
  std::sort(rep.thresholds_m.begin(), rep.thresholds_m.end());
  rep.epochs_total = rows.size();
  std::vector<double> times;
  for (const auto& r : rows) {
    if (r.status != FixStatus::Ok) continue;
    rep.errors_m.push_back(distance(r.estimate, r.truth));
    times.push_back(r.t_s);
  }
  rep.epochs_ok = rep.errors_m.size();
  for (double t : rep.thresholds_m) rep.pct_within.push_back(pct_within(rep.errors_m, t));
  if (!rep.errors_m.empty()) {
    rep.mean_error_m = std::accumulate(rep.errors_m.begin(), rep.errors_m.end(), 0.0) /
                       static_cast<double>(rep.errors_m.size());
    rep.median_error_m = quantile(rep.errors_m, 0.5);
    rep.p95_error_m = quantile(rep.errors_m, 0.95);
  }
  if (times.size() >= 2) {
    const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
    if (*hi > *lo) rep.update_rate_hz = static_cast<double>(times.size() - 1) / (*hi - *lo);
  }
  return rep;
}

void attach_trace_counts(AccuracyReport& report, const EventTrace& trace) {
  report.seed = trace.seed;
  report.messages.clear();
  report.messages["total"] = trace.message_count();
  for (auto k : {MessageKind::Poll, MessageKind::PollAck, MessageKind::RangeFinal, MessageKind::RangeReport,
                 MessageKind::RangeReq, MessageKind::Sync, MessageKind::Range}) {
    const auto n = trace.count(TraceEventType::Tx, k);
    if (n) report.messages[std::string(to_string(k))] = n;
  }
  report.messages["dropped"] = trace.count(TraceEventType::Drop);
}

std::string report_to_json(const AccuracyReport& r) {
  json j;
  j["seed"] = r.seed;
  if (r.config_hash) {
    std::ostringstream h;
    h << std::hex << std::setw(16) << std::setfill('0') << *r.config_hash;
    j["config_hash"] = h.str();
  }
  j["epochs_total"] = r.epochs_total;
  j["epochs_ok"] = r.epochs_ok;
  json within = json::array();
  for (std::size_t i = 0; i < r.thresholds_m.size(); ++i) {
    within.push_back({{"threshold_m", r.thresholds_m[i]}, {"pct", r.pct_within[i]}});
  }
  j["pct_within"] = within;
  j["mean_error_m"] = r.mean_error_m;
  j["median_error_m"] = r.median_error_m;
  j["p95_error_m"] = r.p95_error_m;
  j["update_rate_hz"] = r.update_rate_hz;
  j["messages"] = r.messages;
  return j.dump(2) + "\n";
}

void print_report_table(std::ostream& out, const AccuracyReport& r) {
  const auto flags = out.flags();
  out << "epochs " << r.epochs_ok << "/" << r.epochs_total << " localized, seed " << r.seed << "\n";
  out << std::fixed << std::setprecision(1);
  out << "  threshold    within\n";
  for (std::size_t i = 0; i < r.thresholds_m.size(); ++i) {
    out << "  " << std::setw(6) << r.thresholds_m[i] * 100.0 << " cm  " << std::setw(6) << r.pct_within[i] << " %\n";
  }
  out << std::setprecision(4);
  out << "  mean " << r.mean_error_m << " m, median " << r.median_error_m << " m, p95 " << r.p95_error_m << " m\n";
  out << std::setprecision(2) << "  update rate " << r.update_rate_hz << " Hz\n";
  if (!r.messages.empty()) {
    out << "  messages";
    for (const auto& [k, n] : r.messages) out << ' ' << k << '=' << n;
    out << '\n';
  }
  out.flags(flags);
}

RunOutput run_experiment(const ExperimentConfig& config) {
  RunOutput out;
  out.trace = simulate(config);
  out.rows = localize(out.trace, config);
  out.report = make_report(out.rows, config.thresholds_m);
  attach_trace_counts(out.report, out.trace);
  out.report.config_hash = config_hash(config);
  return out;
}

// ---------------------------------------------------------------- sweep

ExperimentConfig apply_sweep_value(const ExperimentConfig& base, const std::string& parameter,
                                   const std::string& value) {
  ExperimentConfig cfg = base;
  const auto as_number = [&]() {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, parameter + ": '" + value + "' is not a number");
    }
  };
  if (parameter == "sync_interval_s") {
    cfg.scenario.sync_interval_s = as_number();
  } else if (parameter == "timestamp_noise_sigma_s") {
    cfg.scenario.channel.timestamp_noise_sigma = as_number();
  } else if (parameter == "method") {
    const auto m = parse_solve_method(value);
    if (!m) throw Error(ErrorCode::ConfigError, "method: unknown solver method '" + value + "'");
    cfg.method = *m;
  } else if (parameter == "filter") {
    if (!is_tdoa(base.protocol)) throw Error(ErrorCode::ConfigError, "filter: only TDoA protocols have a filter");
    if (value == "on") {
      cfg.protocol = Protocol::TdoaKalman;
    } else if (value == "off") {
      cfg.protocol = Protocol::TdoaRaw;
    } else {
      throw Error(ErrorCode::ConfigError, "filter: expected 'on' or 'off', got '" + value + "'");
    }
  } else {
    throw Error(ErrorCode::ConfigError,
                "sweep parameter '" + parameter +
                    "' is not sweepable (sync_interval_s, timestamp_noise_sigma_s, method, filter)");
  }
  cfg.validate();
  return cfg;
}

std::vector<SweepPoint> sweep(const ExperimentConfig& base, const std::string& parameter,
                              const std::vector<std::string>& values, bool parallel) {
  if (values.empty()) throw Error(ErrorCode::ConfigError, "sweep: no values given");
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) configs.push_back(apply_sweep_value(base, parameter, v));
  std::vector<SweepPoint> points(values.size());
  const auto run_one = [&](std::size_t i) {
    points[i] = {values[i], run_experiment(configs[i]).report};
  };
  if (parallel) {
    std::vector<std::future<void>> jobs;
    for (std::size_t i = 0; i < values.size(); ++i) jobs.push_back(std::async(std::launch::async, run_one, i));
    for (auto& j : jobs) j.get();
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) run_one(i);
  }
  return points;
}

void write_sweep_csv(std::ostream& out, const std::string& parameter, const std::vector<SweepPoint>& points) {
  out << "parameter,value,metric,metric_value\n";
  out << std::setprecision(12);
  for (const auto& p : points) {
    const auto emit = [&](const std::string& metric, double v) {
      out << parameter << ',' << p.value << ',' << metric << ',' << v << '\n';
    };
    for (std::size_t i = 0; i < p.report.thresholds_m.size(); ++i) {
      std::ostringstream name;
      name << "pct_within_" << p.report.thresholds_m[i] << "m";
      emit(name.str(), p.report.pct_within[i]);
    }
    emit("mean_error_m", p.report.mean_error_m);
    emit("median_error_m", p.report.median_error_m);
    emit("p95_error_m", p.report.p95_error_m);
    emit("update_rate_hz", p.report.update_rate_hz);
    emit("epochs_ok", static_cast<double>(p.report.epochs_ok));
    emit("epochs_total", static_cast<double>(p.report.epochs_total));
  }
}

// ---------------------------------------------------------------- drift

DriftResult driftplot(const ExperimentConfig& config) {
  if (!is_tdoa(config.protocol)) throw Error(ErrorCode::ConfigError, "protocol: drift plots need a TDoA protocol");
  if (config.scenario.layout.anchors.size() != 2) {
    throw Error(ErrorCode::ConfigError, "layout.anchors: drift plots need exactly two anchors");
  }
  const EventTrace trace = simulate(config);
  DriftResult out;
  out.anchor_a = config.scenario.layout.anchors[0].id;
  out.anchor_b = config.scenario.layout.anchors[1].id;
  std::optional<std::array<double, 3>> first;
  std::optional<std::array<double, 3>> prev;
  for (const auto& rec : assemble_tdoa_epochs(trace, config.scenario.layout)) {
    if (!rec.sync) continue;
    const auto a = rec.sync->rx.find(out.anchor_a);
    const auto b = rec.sync->rx.find(out.anchor_b);
    if (a == rec.sync->rx.end() || b == rec.sync->rx.end()) continue;
    const std::array<double, 3> cur{rec.sync->t_sync_tx, a->second, b->second};
    if (!first) first = cur;
    DriftSample s;
    s.t_sync = cur[0];
    s.interval_diff = prev ? (cur[1] - (*prev)[1]) - (cur[2] - (*prev)[2]) : 0.0;
    s.cumulative_diff = (cur[1] - (*first)[1]) - (cur[2] - (*first)[2]);
    out.samples.push_back(s);
    prev = cur;
  }
  if (out.samples.size() >= 2) {
    double mt = 0.0;
    double md = 0.0;
    for (const auto& s : out.samples) {
      mt += s.t_sync;
      md += s.cumulative_diff;
    }
    mt /= static_cast<double>(out.samples.size());
    md /= static_cast<double>(out.samples.size());
    double stt = 0.0;
    double std_ = 0.0;
    for (const auto& s : out.samples) {
      stt += (s.t_sync - mt) * (s.t_sync - mt);
      std_ += (s.t_sync - mt) * (s.cumulative_diff - md);
    }
    out.slope = stt > 0.0 ? std_ / stt : 0.0;
  }
  return out;
}

void write_drift_csv(std::ostream& out, const DriftResult& result) {
  out << "t_sync_s,interval_diff_s,cumulative_diff_s\n";
  out << std::setprecision(17);
  for (const auto& s : result.samples) {
    out << s.t_sync << ',' << s.interval_diff << ',' << s.cumulative_diff << '\n';
  }
}

}  // namespace uwbloc
