#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "moghs/archive.hpp"
#include "moghs/evaluation.hpp"
#include "moghs/grammar.hpp"
#include "moghs/pareto.hpp"
#include "moghs/search.hpp"

namespace moghs {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string run_id = "run";
  std::string grammar = "planar_crawler";  // file path, or the name of a shipped grammar
  std::string output_dir = "runs";
  SearchConfig search;
  std::vector<ObjectiveSpec> objectives;
  EvaluatorConfig evaluator;
  std::string source;  // verbatim config text
};

/// Parses a TOML run config. Unknown keys are rejected.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// MOGHS_DATA_DIR environment variable, else the source tree's data directory.
std::string data_dir();

/// Existing path as given, else <data>/grammars/<name>.json. Throws ConfigError naming the path.
std::string resolve_grammar_path(const std::string& grammar);

std::string run_directory(const RunConfig& cfg);

/// Runs the search and writes config.toml, episodes.jsonl, timings.jsonl, archive.csv,
/// designs.jsonl and summary.json into dir.
SearchResult execute_run(const RunConfig& cfg, const std::string& dir, std::ostream& log);

std::string episode_json(const EpisodeRecord& rec);

DesignKey parse_design_key(const std::string& hex);

/// Everything the metrics and plots need from one run directory.
struct RunData {
  std::string dir;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::vector<std::string> objectives;
  Front front;     // archive
  Front sampled;   // every valid episode's design reward
  std::vector<EpisodeRecord> episodes;
};

RunData load_run(const std::string& dir);

/// Archive rebuilt from an episode stream.
ParetoArchive replay_archive(const std::vector<EpisodeRecord>& episodes, int objectives);

struct RunMetrics {
  std::string dir;
  std::string algorithm;
  std::size_t front_size = 0;
  double hv = 0.0;
  double gd = 0.0;
  double igd = 0.0;
};

struct AlgorithmSummary {
  std::string algorithm;
  int runs = 0;
  double hv = 0.0;
  double gd = 0.0;
  double igd = 0.0;
};

struct MetricsReport {
  std::vector<std::string> objectives;
  Front reference;
  std::vector<RunMetrics> runs;
  std::vector<AlgorithmSummary> summary;  // moghs, discrete_weights, random order
};

/// Reference set from the union of every run's samples; HV uses the origin.
MetricsReport compute_metrics(const std::vector<RunData>& runs);
std::string metrics_json(const MetricsReport& report);

struct PlotSeries {
  std::string label;
  Front points;
};

/// Deterministic SVG scatter of columns (x, y) of each series.
std::string render_scatter_svg(const std::vector<PlotSeries>& series, int x, int y,
                               const std::vector<std::string>& names, const std::string& title);

class CensusCapExceeded : public std::runtime_error {
 public:
  explicit CensusCapExceeded(std::size_t reached)
      : std::runtime_error("census cap exceeded after " + std::to_string(reached) + " designs"), reached(reached) {}
  std::size_t reached;
};

struct Census {
  std::vector<DesignGraph> designs;  // one per isomorphism class, in discovery order
  std::vector<DesignKey> keys;
  std::size_t size() const { return designs.size(); }
};

/// Depth-first enumeration of terminal designs with canonical-key deduplication.
Census enumerate_designs(const Grammar& g, std::size_t cap = 100000);

/// Commands; return the process exit code.
int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::string> algorithm,
            std::optional<std::string> out_dir, std::ostream& out, std::ostream& err);
int cmd_metrics(const std::vector<std::string>& dirs, const std::string& out_path, std::ostream& out,
                std::ostream& err);
int cmd_plot(const std::vector<std::string>& dirs, const std::string& out_dir, std::ostream& out, std::ostream& err);
int cmd_enumerate(const std::string& grammar, std::size_t cap, bool front, std::ostream& out, std::ostream& err);
/// Checks that the episode log reproduces archive.csv; optionally dumps the trajectory of one
/// archive design as JSON lines of SimState.
int cmd_replay(const std::string& dir, std::optional<std::size_t> entry, const std::string& trajectory_out,
               std::ostream& out, std::ostream& err);

}  // namespace moghs
