#include "moghs/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>
#include <toml.hpp>

#include "moghs/parallel.hpp"
#include "moghs/physics.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace moghs {

// ---------------------------------------------------------------------------------------------
// config

namespace {

class TableReader {
 public:
  TableReader(const toml::table* t, std::string where) : t_(t), where_(std::move(where)) {}

  template <typename T>
  void get(const std::string& key, T& dst) {
    used_.insert(key);
    if (!t_) return;
    const toml::node* n = t_->get(key);
    if (!n) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = n->value<bool>()) return void(dst = *v);
    } else if constexpr (std::is_integral_v<T>) {
      if (n->is_integer()) return void(dst = static_cast<T>(*n->value<std::int64_t>()));
    } else if constexpr (std::is_floating_point_v<T>) {
      if (n->is_number()) return void(dst = *n->value<double>());
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = n->value<std::string>()) return void(dst = *v);
    } else if constexpr (std::is_same_v<T, std::array<double, 5>>) {
      if (const toml::array* a = n->as_array(); a && a->size() == 5) {
        for (std::size_t i = 0; i < 5; ++i) {
          auto v = (*a)[i].value<double>();
          if (!v) break;
          dst[i] = *v;
          if (i == 4) return;
        }
      }
    }
    throw ConfigError("config: bad value for " + where_ + key);
  }

  const toml::table* sub(const std::string& key) {
    used_.insert(key);
    if (!t_) return nullptr;
    const toml::node* n = t_->get(key);
    if (!n) return nullptr;
    if (!n->is_table()) throw ConfigError("config: " + where_ + key + " must be a table");
    return n->as_table();
  }

  const toml::array* array(const std::string& key) {
    used_.insert(key);
    if (!t_) return nullptr;
    const toml::node* n = t_->get(key);
    if (!n) return nullptr;
    if (!n->is_array()) throw ConfigError("config: " + where_ + key + " must be an array");
    return n->as_array();
  }

  void finish() const {
    if (!t_) return;
    for (auto&& [k, v] : *t_)
      if (!used_.count(std::string(k.str()))) throw ConfigError("config: unknown key " + where_ + std::string(k.str()));
  }

 private:
  const toml::table* t_;
  std::string where_;
  std::set<std::string> used_;
};

ObjectiveSpec read_objective(const toml::table& t, std::size_t i) {
  TableReader r(&t, "objectives[" + std::to_string(i) + "].");
  std::string kind;
  r.get("kind", kind);
  if (kind.empty()) throw ConfigError("config: objectives[" + std::to_string(i) + "] needs a kind");
  ObjectiveSpec spec;
  try {
    spec = ObjectiveSpec::make(parse_objective_kind(kind));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ObjectiveParams& p = spec.params;
  r.get("duration", p.duration);
  r.get("passive_duration", p.passive_duration);
  r.get("stability", p.stability);
  r.get("jump_scale", p.jump_scale);
  r.get("complexity_scale", p.complexity_scale);
  r.get("height_scale", p.height_scale);
  r.get("pitch_penalty", p.pitch_penalty);
  r.get("torque_scale", p.torque_scale);
  r.finish();
  return spec;
}

void validate(const RunConfig& c) {
  const SearchConfig& s = c.search;
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  need(c.objectives.size() >= 2, "at least two objectives are required");
  need(s.episodes >= 0, "episodes must be >= 0");
  need(s.candidates >= 1, "candidates must be >= 1");
  need(s.opt_iter >= 0, "opt_iter must be >= 0");
  need(s.minibatch >= 1, "minibatch must be >= 1");
  need(s.weight_minibatch >= 1, "weight_minibatch must be >= 1");
  need(s.max_restarts >= 0, "max_restarts must be >= 0");
  need(s.reward_set_cap >= 2, "reward_set_cap must be >= 2");
  need(s.hidden >= 1 && s.layers >= 1, "heuristic shape must be positive");
  need(s.learning_rate > 0.0, "learning_rate must be positive");
  need(s.epsilon.start >= 0.0 && s.epsilon.start <= 1.0 && s.epsilon.end >= 0.0 && s.epsilon.end <= 1.0,
       "epsilon must lie in [0, 1]");
  for (double sc : s.scaling.scale) need(sc > 0.0, "feature_scale entries must be positive");
  const MppiConfig& m = c.evaluator.mppi;
  need(m.horizon >= 1 && m.samples >= 1 && m.executed >= 1 && m.executed <= m.horizon,
       "mppi needs positive sizes and executed <= horizon");
  need(m.noise > 0.0 && m.temperature > 0.0, "mppi noise and temperature must be positive");
  const PhysicsConfig& p = c.evaluator.physics;
  need(p.dt > 0.0 && p.substeps >= 1 && p.iterations >= 1, "physics needs positive dt, substeps, iterations");
  if (s.algorithm == Algorithm::discrete_weights)
    need(c.objectives.size() == 2, "discrete_weights needs exactly two objectives");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError("config parse error at line " + std::to_string(e.source().begin.line) + ": " +
                      std::string(e.description()));
  }
  RunConfig c;
  c.source = text;
  TableReader top(&root, "");
  top.get("run_id", c.run_id);
  top.get("grammar", c.grammar);
  top.get("output_dir", c.output_dir);

  {
    TableReader r(top.sub("search"), "search.");
    SearchConfig& s = c.search;
    std::string algorithm(to_string(s.algorithm));
    std::int64_t seed = 0;
    std::int64_t cap = static_cast<std::int64_t>(s.reward_set_cap);
    r.get("algorithm", algorithm);
    r.get("episodes", s.episodes);
    r.get("candidates", s.candidates);
    r.get("opt_iter", s.opt_iter);
    r.get("minibatch", s.minibatch);
    r.get("weight_minibatch", s.weight_minibatch);
    r.get("max_restarts", s.max_restarts);
    r.get("reward_set_cap", cap);
    r.get("seed", seed);
    TableReader e(r.sub("epsilon"), "search.epsilon.");
    e.get("start", s.epsilon.start);
    e.get("end", s.epsilon.end);
    e.get("anneal_fraction", s.epsilon.anneal_fraction);
    e.finish();
    r.finish();
    try {
      s.algorithm = parse_algorithm(algorithm);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(std::string("config: ") + ex.what());
    }
    if (seed < 0 || cap < 0) throw ConfigError("config: seed and reward_set_cap must be nonnegative");
    s.seed = static_cast<std::uint64_t>(seed);
    s.reward_set_cap = static_cast<std::size_t>(cap);
  }
  {
    TableReader r(top.sub("heuristic"), "heuristic.");
    r.get("hidden", c.search.hidden);
    r.get("layers", c.search.layers);
    r.get("learning_rate", c.search.learning_rate);
    r.get("feature_center", c.search.scaling.center);
    r.get("feature_scale", c.search.scaling.scale);
    r.finish();
  }
  {
    TableReader r(top.sub("physics"), "physics.");
    PhysicsConfig& p = c.evaluator.physics;
    r.get("gravity", p.gravity);
    r.get("dt", p.dt);
    r.get("substeps", p.substeps);
    r.get("iterations", p.iterations);
    r.get("projection_iterations", p.projection_iterations);
    r.get("contact_stiffness", p.contact_stiffness);
    r.get("contact_damping", p.contact_damping);
    r.get("friction", p.friction);
    r.get("joint_stiffness", p.joint_stiffness);
    r.get("joint_damping", p.joint_damping);
    r.get("overlap_tolerance", p.overlap_tolerance);
    r.finish();
  }
  {
    TableReader r(top.sub("mppi"), "mppi.");
    MppiConfig& m = c.evaluator.mppi;
    r.get("horizon", m.horizon);
    r.get("samples", m.samples);
    r.get("noise", m.noise);
    r.get("temperature", m.temperature);
    r.get("executed", m.executed);
    r.finish();
  }
  if (const toml::array* objs = top.array("objectives")) {
    for (std::size_t i = 0; i < objs->size(); ++i) {
      const toml::table* t = (*objs)[i].as_table();
      if (!t) throw ConfigError("config: objectives must be an array of tables");
      c.objectives.push_back(read_objective(*t, i));
    }
  }
  top.finish();
  c.evaluator.threads = thread_count();
  validate(c);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string data_dir() {
  if (const char* env = std::getenv("MOGHS_DATA_DIR")) return env;
#ifdef MOGHS_DATA_DIR
  return MOGHS_DATA_DIR;
#else
  return "data";
#endif
}

std::string resolve_grammar_path(const std::string& grammar) {
  if (fs::exists(grammar)) return grammar;
  const bool bare = grammar.find('/') == std::string::npos && fs::path(grammar).extension() != ".json";
  const std::string path = bare ? (fs::path(data_dir()) / "grammars" / (grammar + ".json")).string() : grammar;
  if (!fs::exists(path)) throw ConfigError("grammar file not found: " + path);
  return path;
}

std::string run_directory(const RunConfig& cfg) {
  return (fs::path(cfg.output_dir) /
          (cfg.run_id + "_" + std::string(to_string(cfg.search.algorithm)) + "_s" + std::to_string(cfg.search.seed)))
      .string();
}

// ---------------------------------------------------------------------------------------------
// persistence

namespace {

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd json_vec(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].is_null() ? NAN : a[i].get<double>();
  return v;
}

json design_json(const DesignGraph& d) {
  json nodes = json::array();
  for (const LinkNode& n : d.nodes)
    nodes.push_back({{"symbol", n.symbol},
                     {"terminal", n.terminal},
                     {"length", n.length},
                     {"radius", n.radius},
                     {"density", n.density},
                     {"attach_angle", n.attach_angle},
                     {"joint", n.joint_kind == JointKind::revolute ? "revolute" : "fixed"},
                     {"torque_limit", n.torque_limit}});
  json edges = json::array();
  for (const Edge& e : d.edges) edges.push_back({e.parent, e.child});
  return {{"root", d.root}, {"nodes", nodes}, {"edges", edges}};
}

DesignGraph json_design(const json& j) {
  DesignGraph d;
  d.root = j.at("root").get<int>();
  for (const json& n : j.at("nodes")) {
    LinkNode v;
    v.symbol = n.at("symbol").get<int>();
    v.terminal = n.at("terminal").get<bool>();
    v.length = n.at("length").get<double>();
    v.radius = n.at("radius").get<double>();
    v.density = n.at("density").get<double>();
    v.attach_angle = n.at("attach_angle").get<double>();
    v.joint_kind = n.at("joint").get<std::string>() == "revolute" ? JointKind::revolute : JointKind::fixed;
    v.torque_limit = n.at("torque_limit").get<double>();
    d.nodes.push_back(v);
  }
  for (const json& e : j.at("edges")) d.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  return d;
}

std::vector<std::string> objective_names(const RunConfig& cfg) {
  std::vector<std::string> names;
  for (const ObjectiveSpec& s : cfg.objectives) names.emplace_back(to_string(s.kind));
  return names;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

}  // namespace

std::string episode_json(const EpisodeRecord& rec) {
  json j;
  j["index"] = rec.index;
  j["subproblem"] = rec.subproblem;
  j["weight"] = vec_json(rec.weight);
  j["epsilon"] = rec.epsilon;
  j["key"] = rec.key.hex();
  j["valid"] = rec.valid;
  j["reward"] = vec_json(rec.reward);
  j["design_reward"] = vec_json(rec.design_reward);
  j["evaluator_calls"] = rec.evaluator_calls;
  j["simulator_calls"] = rec.simulator_calls;
  j["loss"] = rec.loss;
  return j.dump();
}

DesignKey parse_design_key(const std::string& hex) {
  if (hex.size() != 32) throw std::invalid_argument("design key must be 32 hex digits: " + hex);
  DesignKey k;
  k.hi = std::stoull(hex.substr(0, 16), nullptr, 16);
  k.lo = std::stoull(hex.substr(16), nullptr, 16);
  return k;
}

SearchResult execute_run(const RunConfig& cfg, const std::string& dir, std::ostream& log) {
  const Grammar grammar = load_grammar_file(resolve_grammar_path(cfg.grammar));
  fs::create_directories(dir);
  write_text(fs::path(dir) / "config.toml", cfg.source);

  std::ofstream episodes(fs::path(dir) / "episodes.jsonl", std::ios::binary);
  std::ofstream timings(fs::path(dir) / "timings.jsonl", std::ios::binary);
  if (!episodes || !timings) throw std::runtime_error("cannot write logs in " + dir);

  SuiteEvaluator evaluator(cfg.objectives, cfg.evaluator);
  const int total = cfg.search.episodes;
  const int every = std::max(1, total / 10);
  const auto cb = [&](const EpisodeRecord& rec) {
    episodes << episode_json(rec) << '\n';
    episodes.flush();
    json t{{"index", rec.index},
           {"design", rec.timings.design},
           {"evaluation", rec.timings.evaluation},
           {"learning", rec.timings.learning},
           {"wall", rec.wall_time}};
    timings << t.dump() << '\n';
    if ((rec.index + 1) % every == 0) log << "episode " << rec.index + 1 << "/" << total << '\n';
  };
  const auto t0 = std::chrono::steady_clock::now();
  SearchResult res = run_search(grammar, evaluator, cfg.search, cb);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::vector<std::string> names = objective_names(cfg);
  {
    std::ofstream out(fs::path(dir) / "archive.csv", std::ios::binary);
    write_archive_csv(out, res.archive, names);
  }

  {
    std::ofstream out(fs::path(dir) / "designs.jsonl", std::ios::binary);
    for (const ArchiveEntry& e : res.archive.entries())
      out << json{{"key", e.key.hex()}, {"design", design_json(res.designs.at(e.key))}}.dump() << '\n';
  }

  json summary;
  summary["run_id"] = cfg.run_id;
  summary["algorithm"] = std::string(to_string(cfg.search.algorithm));
  summary["seed"] = cfg.search.seed;
  summary["grammar"] = cfg.grammar;
  summary["objectives"] = names;
  summary["episodes_requested"] = total;
  summary["episodes_completed"] = res.log.size();
  summary["evaluator_calls"] = res.evaluator_calls;
  summary["simulator_calls"] = res.simulator_calls;
  summary["archive_size"] = res.archive.size();
  summary["exhausted"] = res.exhausted;
  summary["warning"] = res.warning;
  summary["wall_time"] = wall;
  json best = json::object();
  for (std::size_t i = 0; i < names.size(); ++i) {
    double b = -std::numeric_limits<double>::infinity();
    for (const ArchiveEntry& e : res.archive.entries()) b = std::max(b, e.reward(static_cast<Eigen::Index>(i)));
    best[names[i]] = res.archive.empty() ? json(nullptr) : json(b);
  }
  summary["best"] = best;
  write_text(fs::path(dir) / "summary.json", summary.dump(2) + "\n");
  return res;
}

}  // namespace moghs

namespace moghs {

// ---------------------------------------------------------------------------------------------
// loading and replay

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EpisodeRecord parse_episode(const json& j) {
  EpisodeRecord r;
  r.index = j.at("index").get<int>();
  r.subproblem = j.at("subproblem").get<int>();
  r.weight = json_vec(j.at("weight"));
  r.epsilon = j.at("epsilon").get<double>();
  r.key = parse_design_key(j.at("key").get<std::string>());
  r.valid = j.at("valid").get<bool>();
  r.reward = json_vec(j.at("reward"));
  r.design_reward = json_vec(j.at("design_reward"));
  r.evaluator_calls = j.at("evaluator_calls").get<int>();
  r.simulator_calls = j.at("simulator_calls").get<int>();
  r.loss = j.at("loss").is_null() ? NAN : j.at("loss").get<double>();
  return r;
}

Front rows_to_front(const std::vector<Eigen::VectorXd>& rows, Eigen::Index m) {
  Front f(static_cast<Eigen::Index>(rows.size()), m);
  for (std::size_t i = 0; i < rows.size(); ++i) f.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return f;
}

std::string archive_csv_text(const ParetoArchive& a, const std::vector<std::string>& names) {
  std::ostringstream out;
  write_archive_csv(out, a, names);
  return out.str();
}

}  // namespace

RunData load_run(const std::string& dir) {
  RunData run;
  run.dir = dir;
  const json summary = json::parse(read_text(fs::path(dir) / "summary.json"));
  run.algorithm = summary.at("algorithm").get<std::string>();
  run.seed = summary.at("seed").get<std::uint64_t>();
  run.objectives = summary.at("objectives").get<std::vector<std::string>>();
  const auto m = static_cast<Eigen::Index>(run.objectives.size());

  std::istringstream eps(read_text(fs::path(dir) / "episodes.jsonl"));
  std::string line;
  std::vector<Eigen::VectorXd> sampled;
  while (std::getline(eps, line)) {
    if (line.empty()) continue;
    run.episodes.push_back(parse_episode(json::parse(line)));
    if (run.episodes.back().valid) sampled.push_back(run.episodes.back().design_reward);
  }
  run.sampled = rows_to_front(sampled, m);

  std::istringstream csv(read_text(fs::path(dir) / "archive.csv"));
  std::getline(csv, line);
  std::vector<Eigen::VectorXd> front;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<Eigen::Index>(cells.size()) != m + 2) throw std::runtime_error("archive.csv: bad row in " + dir);
    Eigen::VectorXd r(m);
    for (Eigen::Index j = 0; j < m; ++j) r(j) = std::stod(cells[static_cast<std::size_t>(j + 2)]);
    front.push_back(r);
  }
  run.front = rows_to_front(front, m);
  return run;
}

ParetoArchive replay_archive(const std::vector<EpisodeRecord>& episodes, int objectives) {
  ParetoArchive a(objectives);
  for (const EpisodeRecord& r : episodes)
    if (r.valid) a.insert(r.key, r.design_reward, r.index);
  return a;
}

// ---------------------------------------------------------------------------------------------
// metrics

MetricsReport compute_metrics(const std::vector<RunData>& runs) {
  if (runs.empty()) throw std::invalid_argument("metrics: no runs");
  MetricsReport rep;
  rep.objectives = runs.front().objectives;
  std::vector<Front> samples;
  for (const RunData& r : runs) {
    if (r.objectives != rep.objectives)
      throw std::invalid_argument("metrics: mixed objective suites (" + r.dir + ")");
    samples.push_back(r.sampled);
    samples.push_back(r.front);
  }
  rep.reference = build_reference_set(samples);
  const auto m = static_cast<Eigen::Index>(rep.objectives.size());
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(m);

  for (const RunData& r : runs) {
    RunMetrics rm;
    rm.dir = r.dir;
    rm.algorithm = r.algorithm;
    rm.front_size = static_cast<std::size_t>(r.front.rows());
    if (m <= 3) {
      rm.hv = hypervolume(r.front, origin);
    } else {
      std::mt19937_64 rng(12345);
      rm.hv = hypervolume_monte_carlo(r.front, origin, 1000000, rng).value;
    }
    const bool usable = r.front.rows() > 0 && rep.reference.rows() > 0;
    rm.gd = usable ? generational_distance(r.front, rep.reference) : std::numeric_limits<double>::quiet_NaN();
    rm.igd = usable ? inverse_generational_distance(r.front, rep.reference) : std::numeric_limits<double>::quiet_NaN();
    rep.runs.push_back(rm);
  }

  std::vector<std::string> order{"moghs", "discrete_weights", "random"};
  for (const RunMetrics& rm : rep.runs)
    if (std::find(order.begin(), order.end(), rm.algorithm) == order.end()) order.push_back(rm.algorithm);
  for (const std::string& alg : order) {
    AlgorithmSummary s;
    s.algorithm = alg;
    for (const RunMetrics& rm : rep.runs) {
      if (rm.algorithm != alg) continue;
      ++s.runs;
      s.hv += rm.hv;
      s.gd += rm.gd;
      s.igd += rm.igd;
    }
    if (s.runs == 0) continue;
    s.hv /= s.runs;
    s.gd /= s.runs;
    s.igd /= s.runs;
    rep.summary.push_back(s);
  }
  return rep;
}

std::string metrics_json(const MetricsReport& rep) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["objectives"] = rep.objectives;
  j["reference_point"] = std::vector<double>(rep.objectives.size(), 0.0);
  json R = json::array();
  for (Eigen::Index i = 0; i < rep.reference.rows(); ++i) R.push_back(vec_json(rep.reference.row(i).transpose()));
  j["reference_set"] = R;
  json runs = json::array();
  for (const RunMetrics& r : rep.runs)
    runs.push_back({{"dir", r.dir},
                    {"algorithm", r.algorithm},
                    {"front_size", r.front_size},
                    {"hv", num(r.hv)},
                    {"gd", num(r.gd)},
                    {"igd", num(r.igd)}});
  j["runs"] = runs;
  json summary = json::array();
  for (const AlgorithmSummary& s : rep.summary)
    summary.push_back(
        {{"algorithm", s.algorithm}, {"runs", s.runs}, {"hv", num(s.hv)}, {"gd", num(s.gd)}, {"igd", num(s.igd)}});
  j["summary"] = summary;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------------------------
// plots

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

struct Style {
  const char* color;
  int marker;  // 0 circle, 1 square, 2 triangle
};

Style style_for(const std::string& label, std::size_t i) {
  if (label.rfind("moghs", 0) == 0) return {"#d62728", 0};
  if (label.rfind("discrete_weights", 0) == 0) return {"#1f77b4", 1};
  if (label.rfind("random", 0) == 0) return {"#7f7f7f", 2};
  static const char* palette[] = {"#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#bcbd22", "#17becf"};
  return {palette[i % 6], static_cast<int>(i % 3)};
}

std::string marker(const Style& s, double x, double y) {
  std::string c = s.color;
  switch (s.marker) {
    case 1:
      return "<rect x=\"" + fmt("%.2f", x - 4) + "\" y=\"" + fmt("%.2f", y - 4) +
             "\" width=\"8\" height=\"8\" fill=\"" + c + "\" fill-opacity=\"0.8\"/>\n";
    case 2:
      return "<polygon points=\"" + fmt("%.2f", x) + "," + fmt("%.2f", y - 5) + " " + fmt("%.2f", x - 5) + "," +
             fmt("%.2f", y + 4) + " " + fmt("%.2f", x + 5) + "," + fmt("%.2f", y + 4) + "\" fill=\"" + c +
             "\" fill-opacity=\"0.8\"/>\n";
    default:
      return "<circle cx=\"" + fmt("%.2f", x) + "\" cy=\"" + fmt("%.2f", y) + "\" r=\"4\" fill=\"" + c +
             "\" fill-opacity=\"0.8\"/>\n";
  }
}

}  // namespace

std::string render_scatter_svg(const std::vector<PlotSeries>& series, int x, int y,
                               const std::vector<std::string>& names, const std::string& title) {
  const double W = 640, H = 480, L = 80, R = 170, T = 40, B = 60;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const PlotSeries& s : series)
    for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
      x0 = std::min(x0, s.points(i, x));
      x1 = std::max(x1, s.points(i, x));
      y0 = std::min(y0, s.points(i, y));
      y1 = std::max(y1, s.points(i, y));
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  auto pad = [](double& lo, double& hi) {
    const double span = hi - lo > 1e-12 ? hi - lo : std::max(1.0, std::abs(lo));
    lo -= 0.05 * span;
    hi += 0.05 * span;
  };
  pad(x0, x1);
  pad(y0, y1);
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return T + ph - (v - y0) / (y1 - y0) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt("%.1f", L + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" +
         xml_escape(title) + "</text>\n";
  svg += "<rect x=\"" + fmt("%.1f", L) + "\" y=\"" + fmt("%.1f", T) + "\" width=\"" + fmt("%.1f", pw) +
         "\" height=\"" + fmt("%.1f", ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double vx = x0 + (x1 - x0) * k / 4.0, vy = y0 + (y1 - y0) * k / 4.0;
    svg += "<line x1=\"" + fmt("%.2f", px(vx)) + "\" y1=\"" + fmt("%.2f", T + ph) + "\" x2=\"" + fmt("%.2f", px(vx)) +
           "\" y2=\"" + fmt("%.2f", T + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt("%.2f", px(vx)) + "\" y=\"" + fmt("%.2f", T + ph + 18) +
           "\" text-anchor=\"middle\">" + fmt("%.3g", vx) + "</text>\n";
    svg += "<line x1=\"" + fmt("%.2f", L - 5) + "\" y1=\"" + fmt("%.2f", py(vy)) + "\" x2=\"" + fmt("%.2f", L) +
           "\" y2=\"" + fmt("%.2f", py(vy)) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt("%.2f", L - 8) + "\" y=\"" + fmt("%.2f", py(vy) + 4) + "\" text-anchor=\"end\">" +
           fmt("%.3g", vy) + "</text>\n";
  }
  svg += "<text x=\"" + fmt("%.1f", L + pw / 2) + "\" y=\"" + fmt("%.1f", H - 16) + "\" text-anchor=\"middle\">" +
         xml_escape(names[static_cast<std::size_t>(x)]) + "</text>\n";
  svg += "<text x=\"20\" y=\"" + fmt("%.1f", T + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " +
         fmt("%.1f", T + ph / 2) + ")\">" + xml_escape(names[static_cast<std::size_t>(y)]) + "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const Style st = style_for(series[s].label, s);
    for (Eigen::Index i = 0; i < series[s].points.rows(); ++i)
      svg += marker(st, px(series[s].points(i, x)), py(series[s].points(i, y)));
    const double ly = T + 10 + 20.0 * static_cast<double>(s);
    svg += marker(st, W - R + 20, ly);
    svg += "<text x=\"" + fmt("%.1f", W - R + 32) + "\" y=\"" + fmt("%.1f", ly + 4) + "\">" +
           xml_escape(series[s].label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------------------------------------
// enumeration

Census enumerate_designs(const Grammar& g, std::size_t cap) {
  Census c;
  std::vector<DesignGraph> stack{g.initial_design()};
  std::unordered_set<DesignKey> seen{canonical_key(stack.front())};
  while (!stack.empty()) {
    DesignGraph d = std::move(stack.back());
    stack.pop_back();
    if (is_terminal(d)) {
      if (c.size() >= cap) throw CensusCapExceeded(c.size());
      c.keys.push_back(canonical_key(d));
      c.designs.push_back(std::move(d));
      continue;
    }
    const auto apps = applicable_rules(g, d);
    for (auto it = apps.rbegin(); it != apps.rend(); ++it) {
      DesignGraph child = apply_rule(g, d, *it);
      if (seen.insert(canonical_key(child)).second) stack.push_back(std::move(child));
    }
  }
  return c;
}

// ---------------------------------------------------------------------------------------------
// commands

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::string> algorithm,
            std::optional<std::string> out_dir, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
    if (seed) cfg.search.seed = *seed;
    if (algorithm) cfg.search.algorithm = parse_algorithm(*algorithm);
    if (cfg.search.algorithm == Algorithm::discrete_weights && cfg.objectives.size() != 2)
      throw ConfigError("discrete_weights needs exactly two objectives");
    (void)resolve_grammar_path(cfg.grammar);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  const std::string dir = out_dir ? *out_dir : run_directory(cfg);
  SearchResult res;
  try {
    res = execute_run(cfg, dir, err);
  } catch (const GrammarError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  out << "run directory: " << dir << '\n';
  out << "episodes: " << res.log.size() << ", evaluator calls: " << res.evaluator_calls
      << ", simulator calls: " << res.simulator_calls << '\n';
  out << "archive size: " << res.archive.size() << '\n';
  for (std::size_t i = 0; i < cfg.objectives.size(); ++i) {
    out << "best " << to_string(cfg.objectives[i].kind) << ": ";
    if (res.archive.empty()) {
      out << "n/a\n";
      continue;
    }
    double b = -std::numeric_limits<double>::infinity();
    for (const ArchiveEntry& e : res.archive.entries()) b = std::max(b, e.reward(static_cast<Eigen::Index>(i)));
    out << fmt("%.6g", b) << '\n';
  }
  if (res.exhausted) out << "warning: " << res.warning << '\n';
  return 0;
}

int cmd_metrics(const std::vector<std::string>& dirs, const std::string& out_path, std::ostream& out,
                std::ostream& err) {
  MetricsReport rep;
  try {
    std::vector<RunData> runs;
    for (const std::string& d : dirs) runs.push_back(load_run(d));
    rep = compute_metrics(runs);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  const std::string text = metrics_json(rep);
  if (!out_path.empty()) write_text(out_path, text);
  out << "reference set: " << rep.reference.rows() << " points\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %5s %12s %12s %12s\n", "algorithm", "runs", "HV", "GD", "IGD");
  out << line;
  for (const AlgorithmSummary& s : rep.summary) {
    std::snprintf(line, sizeof line, "%-18s %5d %12.6g %12.6g %12.6g\n", s.algorithm.c_str(), s.runs, s.hv, s.gd,
                  s.igd);
    out << line;
  }
  if (out_path.empty()) out << text;
  return 0;
}

int cmd_plot(const std::vector<std::string>& dirs, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  std::vector<RunData> runs;
  try {
    for (const std::string& d : dirs) runs.push_back(load_run(d));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  if (runs.empty()) {
    err << "error: no runs\n";
    return 2;
  }
  const std::vector<std::string> names = runs.front().objectives;
  for (const RunData& r : runs)
    if (r.objectives != names) {
      err << "error: mixed objective suites (" << r.dir << ")\n";
      return 2;
    }
  const int m = static_cast<int>(names.size());
  if (m < 2 || m > 3) {
    err << "error: plots need 2 or 3 objectives, got " << m << '\n';
    return 2;
  }
  fs::create_directories(out_dir);
  std::vector<std::pair<int, int>> pairs{{0, 1}};
  if (m == 3) pairs = {{0, 1}, {0, 2}, {1, 2}};
  auto suffix = [&](std::pair<int, int> p) {
    return m == 2 ? std::string() : "_f" + std::to_string(p.first + 1) + "_f" + std::to_string(p.second + 1);
  };

  int files = 0;
  for (const RunData& r : runs) {
    if (r.front.rows() == 0) err << "warning: " << r.dir << " has an empty archive\n";
    const std::string base = fs::path(r.dir).filename().string();
    const std::vector<PlotSeries> s{{r.algorithm, r.front}};
    for (auto p : pairs) {
      write_text(fs::path(out_dir) / (base + suffix(p) + ".svg"), render_scatter_svg(s, p.first, p.second, names, base));
      ++files;
    }
  }
  if (runs.size() > 1) {
    std::vector<std::string> order;
    for (const char* a : {"moghs", "discrete_weights", "random"}) order.emplace_back(a);
    for (const RunData& r : runs)
      if (std::find(order.begin(), order.end(), r.algorithm) == order.end()) order.push_back(r.algorithm);
    std::vector<PlotSeries> series;
    for (const std::string& alg : order) {
      std::vector<Eigen::VectorXd> pts;
      for (const RunData& r : runs)
        if (r.algorithm == alg)
          for (Eigen::Index i = 0; i < r.front.rows(); ++i) pts.push_back(r.front.row(i).transpose());
      bool present = false;
      for (const RunData& r : runs) present = present || r.algorithm == alg;
      if (present) series.push_back({alg, rows_to_front(pts, m)});
    }
    for (auto p : pairs) {
      write_text(fs::path(out_dir) / ("comparison" + suffix(p) + ".svg"),
                 render_scatter_svg(series, p.first, p.second, names, "Pareto front comparison"));
      ++files;
    }
  }
  out << "wrote " << files << " plot(s) to " << out_dir << '\n';
  return 0;
}

int cmd_enumerate(const std::string& grammar, std::size_t cap, bool front, std::ostream& out, std::ostream& err) {
  Census census;
  try {
    const Grammar g = load_grammar_file(resolve_grammar_path(grammar));
    census = enumerate_designs(g, cap);
  } catch (const CensusCapExceeded& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  out << "designs: " << census.size() << '\n';
  if (!front) return 0;

  const ObjectiveSpec dc = ObjectiveSpec::make(ObjectiveKind::design_complexity);
  const ObjectiveSpec rh = ObjectiveSpec::make(ObjectiveKind::robot_height);
  const EvaluatorConfig ecfg;
  std::mt19937_64 rng(0);
  std::vector<Eigen::VectorXd> pts;
  for (const DesignGraph& d : census.designs) {
    const EvalResult a = evaluate(d, dc, ecfg, rng);
    const EvalResult b = evaluate(d, rh, ecfg, rng);
    if (!a.valid || !b.valid) continue;
    pts.emplace_back(Eigen::Vector2d(a.reward, b.reward));
  }
  out << "valid: " << pts.size() << '\n';
  write_front_csv(out, pareto_filter(rows_to_front(pts, 2)), {"design_complexity", "robot_height"});
  return 0;
}

int cmd_replay(const std::string& dir, std::optional<std::size_t> entry, const std::string& trajectory_out,
               std::ostream& out, std::ostream& err) {
  RunData run;
  std::string stored;
  try {
    run = load_run(dir);
    stored = read_text(fs::path(dir) / "archive.csv");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  const ParetoArchive rebuilt = replay_archive(run.episodes, static_cast<int>(run.objectives.size()));
  const bool same = archive_csv_text(rebuilt, run.objectives) == stored;
  out << (same ? "replay matches archive.csv" : "replay DIFFERS from archive.csv") << " (" << rebuilt.size()
      << " entries)\n";
  if (!same) return 1;
  if (!entry) return 0;

  try {
    const RunConfig cfg = load_run_config((fs::path(dir) / "config.toml").string());
    if (*entry >= rebuilt.size()) throw std::out_of_range("entry index out of range");
    const std::string key = rebuilt.entries()[*entry].key.hex();
    std::istringstream designs(read_text(fs::path(dir) / "designs.jsonl"));
    std::string line;
    std::optional<DesignGraph> design;
    while (std::getline(designs, line))
      if (const json j = json::parse(line); j.at("key").get<std::string>() == key) design = json_design(j.at("design"));
    if (!design) throw std::runtime_error("design " + key + " missing from designs.jsonl");

    ArticulatedBody body = instantiate(*design, cfg.evaluator.physics);
    Trajectory traj;
    const auto motion = std::find_if(cfg.objectives.begin(), cfg.objectives.end(),
                                     [](const ObjectiveSpec& s) { return s.motion_dependent; });
    if (motion != cfg.objectives.end() && body.joint_count() > 0) {
      body.scale_torque_limits(motion->params.torque_scale);
      const StepReward reward = motion->kind == ObjectiveKind::jumping
                                    ? jump_step_reward(motion->params.jump_scale, motion->params.stability)
                                    : flat_step_reward(motion->params.stability, cfg.evaluator.physics.control_dt());
      std::mt19937_64 rng(run.seed);
      traj = run_task(body, reward, motion->params.duration, cfg.evaluator.physics, cfg.evaluator.mppi, rng,
                      cfg.evaluator.threads);
    } else {
      traj = run_passive(body, 1.0, cfg.evaluator.physics);
    }
    std::ofstream dump(trajectory_out, std::ios::binary);
    if (!dump) throw std::runtime_error("cannot write " + trajectory_out);
    for (const SimState& s : traj.states) {
      json pose = json::array(), vel = json::array();
      for (Eigen::Index i = 0; i < s.pose.rows(); ++i) {
        pose.push_back({s.pose(i, 0), s.pose(i, 1), s.pose(i, 2)});
        vel.push_back({s.vel(i, 0), s.vel(i, 1), s.vel(i, 2)});
      }
      dump << json{{"time", s.time}, {"pose", pose}, {"vel", vel}}.dump() << '\n';
    }
    out << "trajectory of " << key << ": " << traj.states.size() << " states -> " << trajectory_out << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace moghs
