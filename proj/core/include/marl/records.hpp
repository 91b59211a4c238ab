#ifndef MARL_RECORDS_HPP_
#define MARL_RECORDS_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marl/theory.hpp"

namespace marl::harness {

// One row per training episode. Column order in the CSV follows field order.
struct EpisodeRecord {
  std::string algorithm;
  std::uint64_t seed = 0;
  int episode_index = 0;
  double mean_agent_total_reward = 0.0;
  double env_reward_component = 0.0;
  double heuristic_component = 0.0;
  double shaped_component = 0.0;
  int landmarks_covered_final = 0;
  int collision_count = 0;
  double wall_clock_ms = 0.0;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

inline constexpr int kRecordsSchemaVersion = 1;
inline constexpr std::string_view kRecordsSchemaName = "marl_lab.episode_records";
inline constexpr int kStepLogSchemaVersion = 1;
inline constexpr std::string_view kStepLogSchemaName = "marl_lab.step_log";

const std::vector<std::string>& record_columns();

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal representation that round-trips.
std::string format_double(double value);
std::string csv_escape(std::string_view field);
std::vector<std::string> parse_csv_line(std::string_view line);

// Appends records to a CSV file, flushing every `flush_every` rows so that a
// crash leaves a file truncated at a row boundary.
class RecordWriter {
 public:
  RecordWriter(const std::filesystem::path& path, int flush_every = 10);
  void append(const EpisodeRecord& record);
  void flush();

 private:
  std::ofstream out_;
  int flush_every_;
  int pending_ = 0;
};

void write_records(std::ostream& out, std::span<const EpisodeRecord> records);
std::vector<EpisodeRecord> read_records(std::istream& in);
std::vector<EpisodeRecord> read_records_file(const std::filesystem::path& path);
// Every *.csv under <dir>/records, in filename order.
std::vector<EpisodeRecord> read_records_dir(const std::filesystem::path& dir);

// Per-step (bucketed state, action, bucketed next state) log for drift analysis.
class StepLogWriter {
 public:
  explicit StepLogWriter(const std::filesystem::path& path);
  void append(const theory::DriftSample& sample, int agent);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

std::vector<theory::DriftSample> read_step_log(const std::filesystem::path& path);

}  // namespace marl::harness

#endif  // MARL_RECORDS_HPP_
