#include "marl/records.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <system_error>

namespace marl::harness {
namespace {

std::string schema_line(std::string_view name, int version) {
  return "#schema=" + std::string(name) + "/" + std::to_string(version);
}

void check_schema_line(const std::string& line, std::string_view name, int version) {
  const std::string prefix = "#schema=" + std::string(name) + "/";
  if (line.rfind(prefix, 0) != 0) {
    throw SchemaError("missing or foreign schema line (expected '" + prefix + "<version>')");
  }
  const std::string ver = line.substr(prefix.size());
  if (ver != std::to_string(version)) {
    throw SchemaError("unsupported " + std::string(name) + " schema version '" + ver +
                      "' (this build reads version " + std::to_string(version) + ")");
  }
}

template <typename T>
T parse_number(const std::string& field, const char* column) {
  T value{};
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw SchemaError(std::string("cannot parse column '") + column + "' value '" + field + "'");
  }
  return value;
}

const std::vector<std::string>& step_log_columns() {
  static const std::vector<std::string> cols = {"episode", "agent", "state_bucket", "action",
                                                "next_bucket"};
  return cols;
}

std::string join_header(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += cols[i];
  }
  return out;
}

// Reads lines; a trailing fragment without '\n' is a torn write and is dropped.
std::vector<std::string> complete_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (in.eof()) break;  // no terminating newline
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> cols = {
      "algorithm",           "seed",                 "episode_index",
      "mean_agent_total_reward", "env_reward_component", "heuristic_component",
      "shaped_component",    "landmarks_covered_final", "collision_count",
      "wall_clock_ms"};
  return cols;
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf.data(), ptr);
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> parse_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw SchemaError("unterminated quoted CSV field");
  fields.push_back(std::move(cur));
  return fields;
}

namespace {

void write_header(std::ostream& out) {
  out << schema_line(kRecordsSchemaName, kRecordsSchemaVersion) << '\n'
      << join_header(record_columns()) << '\n';
}

void write_row(std::ostream& out, const EpisodeRecord& r) {
  out << csv_escape(r.algorithm) << ',' << r.seed << ',' << r.episode_index << ','
      << format_double(r.mean_agent_total_reward) << ',' << format_double(r.env_reward_component)
      << ',' << format_double(r.heuristic_component) << ',' << format_double(r.shaped_component)
      << ',' << r.landmarks_covered_final << ',' << r.collision_count << ','
      << format_double(r.wall_clock_ms) << '\n';
}

}  // namespace

RecordWriter::RecordWriter(const std::filesystem::path& path, int flush_every)
    : out_(path, std::ios::trunc), flush_every_(std::max(1, flush_every)) {
  if (!out_) throw std::runtime_error("cannot open record file " + path.string());
  write_header(out_);
  out_.flush();
}

void RecordWriter::append(const EpisodeRecord& record) {
  write_row(out_, record);
  if (++pending_ >= flush_every_) flush();
}

void RecordWriter::flush() {
  out_.flush();
  pending_ = 0;
  if (!out_) throw std::runtime_error("record file write failed");
}

void write_records(std::ostream& out, std::span<const EpisodeRecord> records) {
  write_header(out);
  for (const auto& r : records) write_row(out, r);
}

std::vector<EpisodeRecord> read_records(std::istream& in) {
  const std::vector<std::string> lines = complete_lines(in);
  if (lines.empty()) throw SchemaError("record file is empty");
  check_schema_line(lines[0], kRecordsSchemaName, kRecordsSchemaVersion);
  if (lines.size() < 2 || lines[1] != join_header(record_columns())) {
    throw SchemaError("record header does not match schema version " +
                      std::to_string(kRecordsSchemaVersion));
  }
  std::vector<EpisodeRecord> out;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = parse_csv_line(lines[i]);
    if (f.size() != record_columns().size()) {
      throw SchemaError("record row " + std::to_string(i + 1) + " has " +
                        std::to_string(f.size()) + " fields");
    }
    EpisodeRecord r;
    r.algorithm = f[0];
    r.seed = parse_number<std::uint64_t>(f[1], "seed");
    r.episode_index = parse_number<int>(f[2], "episode_index");
    r.mean_agent_total_reward = parse_number<double>(f[3], "mean_agent_total_reward");
    r.env_reward_component = parse_number<double>(f[4], "env_reward_component");
    r.heuristic_component = parse_number<double>(f[5], "heuristic_component");
    r.shaped_component = parse_number<double>(f[6], "shaped_component");
    r.landmarks_covered_final = parse_number<int>(f[7], "landmarks_covered_final");
    r.collision_count = parse_number<int>(f[8], "collision_count");
    r.wall_clock_ms = parse_number<double>(f[9], "wall_clock_ms");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<EpisodeRecord> read_records_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open record file " + path.string());
  try {
    return read_records(in);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

std::vector<EpisodeRecord> read_records_dir(const std::filesystem::path& dir) {
  const auto records_dir = dir / "records";
  if (!std::filesystem::is_directory(records_dir)) {
    throw std::runtime_error("no records/ directory under " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(records_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<EpisodeRecord> all;
  for (const auto& f : files) {
    auto part = read_records_file(f);
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return all;
}

StepLogWriter::StepLogWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open step log " + path.string());
  out_ << schema_line(kStepLogSchemaName, kStepLogSchemaVersion) << '\n'
       << join_header(step_log_columns()) << '\n';
}

void StepLogWriter::append(const theory::DriftSample& s, int agent) {
  out_ << s.episode << ',' << agent << ',' << s.state_bucket << ',' << s.action << ','
       << s.next_bucket << '\n';
}

std::vector<theory::DriftSample> read_step_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open step log " + path.string());
  const std::vector<std::string> lines = complete_lines(in);
  if (lines.empty()) throw SchemaError(path.string() + ": empty step log");
  check_schema_line(lines[0], kStepLogSchemaName, kStepLogSchemaVersion);
  if (lines.size() < 2 || lines[1] != join_header(step_log_columns())) {
    throw SchemaError(path.string() + ": step log header mismatch");
  }
  std::vector<theory::DriftSample> out;
  out.reserve(lines.size());
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = parse_csv_line(lines[i]);
    if (f.size() != 5) throw SchemaError(path.string() + ": malformed step log row");
    out.push_back({parse_number<int>(f[0], "episode"), parse_number<int>(f[2], "state_bucket"),
                   parse_number<int>(f[3], "action"), parse_number<int>(f[4], "next_bucket")});
  }
  return out;
}

}  // namespace marl::harness
