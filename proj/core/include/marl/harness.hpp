#ifndef MARL_HARNESS_HPP_
#define MARL_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marl/experiment_spec.hpp"
#include "marl/records.hpp"
#include "marl/stats.hpp"

namespace marl::harness {

inline constexpr int kFinalWindow = 100;
inline constexpr std::string_view kSummarySchema = "marl_lab.run_summary/1";

struct SeedFinal {
  std::uint64_t seed = 0;
  int episodes = 0;
  double final_reward = 0.0;    // mean over the final window
  double final_coverage = 0.0;  // landmarks covered at episode end, final window mean
};

struct AlgorithmSummary {
  std::string algorithm;
  std::vector<SeedFinal> seeds;  // ascending seed order
  stats::SampleSummary final_reward;
  stats::SampleSummary landmark_coverage;
};

struct PairComparison {
  std::string a;
  std::string b;
  stats::ComparisonResult reward;
};

struct RunSummary {
  int final_window = kFinalWindow;
  std::vector<AlgorithmSummary> algorithms;  // MAPPO, IPPO, DMARL_RSA, then others by name
  std::vector<PairComparison> comparisons;   // pairs where both sides have >= 2 seeds
  std::map<std::string, double> coverage_ratio_vs_mappo;

  const AlgorithmSummary* find(std::string_view algorithm) const;
};

struct SummaryOptions {
  int final_window = kFinalWindow;
};

// Pure function of the records; row order does not matter.
RunSummary summarize(std::span<const EpisodeRecord> records, const SummaryOptions& options = {});

std::string summary_to_json(const RunSummary& summary);
std::string format_summary_table(const RunSummary& summary);

// --- learning curves ---------------------------------------------------------

struct CurveRow {
  std::string algorithm;
  std::string series;  // seed number, or "band" for the cross-seed aggregate
  int episode = 0;     // last episode index covered by the window
  double mean = 0.0;   // rolling mean (per seed) or mean of per-seed means (band)
  double std = 0.0;    // zero for per-seed rows
};

// Rolling mean over `window` episodes evaluated every `stride` episodes; only
// full windows are emitted. A window longer than the series is clamped to it.
// Band rows are emitted at endpoints shared by every seed of the algorithm.
std::vector<CurveRow> compute_curves(std::span<const EpisodeRecord> records, int window = 100,
                                     int stride = 10);
void write_curves(std::ostream& out, std::span<const CurveRow> rows);

// --- experiment driver ---------------------------------------------------------

struct RunOutcome {
  std::string algorithm;
  std::uint64_t seed = 0;
  bool ok = false;
  int episodes_completed = 0;
  std::string error;
  std::filesystem::path record_file;
};

struct ExperimentResult {
  std::filesystem::path output_dir;
  std::vector<RunOutcome> runs;  // algorithm-major, then seed order of the spec
  std::optional<RunSummary> summary;
  bool all_ok() const;
};

// Resolves the output directory: MARL_LAB_OUT wins over the spec value.
std::filesystem::path resolve_output_dir(const ExperimentSpec& spec);

// Runs every (algorithm, seed) pair, writing
//   <out>/records/<ALGO>_<seed>.csv, <out>/logs/<ALGO>_<seed>.log,
//   <out>/steps/<ALGO>_<seed>.csv (step_log), <out>/checkpoints/ (checkpoints),
//   <out>/summary.json
// A failing run is reported and the others continue.
ExperimentResult run_experiment(const ExperimentSpec& spec, std::ostream* progress = nullptr);

}  // namespace marl::harness

#endif  // MARL_HARNESS_HPP_
