#include "marl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace marl::harness {
namespace {

using Json = nlohmann::ordered_json;

int algorithm_rank(const std::string& name) {
  try {
    return static_cast<int>(train::parse_algorithm(name));
  } catch (const std::exception&) {
    return 1 << 20;
  }
}

bool algorithm_less(const std::string& a, const std::string& b) {
  const int ra = algorithm_rank(a);
  const int rb = algorithm_rank(b);
  return ra != rb ? ra < rb : a < b;
}

// algorithm -> seed -> records sorted by episode index
using Grouped = std::map<std::string, std::map<std::uint64_t, std::vector<const EpisodeRecord*>>>;

Grouped group_records(std::span<const EpisodeRecord> records) {
  Grouped grouped;
  for (const auto& r : records) grouped[r.algorithm][r.seed].push_back(&r);
  for (auto& [_, seeds] : grouped) {
    for (auto& [seed, rows] : seeds) {
      std::stable_sort(rows.begin(), rows.end(), [](const EpisodeRecord* x, const EpisodeRecord* y) {
        return x->episode_index < y->episode_index;
      });
    }
  }
  return grouped;
}

std::vector<std::string> ordered_algorithms(const Grouped& grouped) {
  std::vector<std::string> names;
  for (const auto& [name, _] : grouped) names.push_back(name);
  std::sort(names.begin(), names.end(), algorithm_less);
  return names;
}

stats::SampleSummary summarize_values(const std::vector<double>& values) {
  if (values.size() >= 2) return stats::aggregate_seeds(values);
  return {values.empty() ? 0.0 : values[0], 0.0, static_cast<int>(values.size())};
}

Json summary_block(const stats::SampleSummary& s) {
  return Json{{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
}

}  // namespace

const AlgorithmSummary* RunSummary::find(std::string_view algorithm) const {
  for (const auto& a : algorithms) {
    if (a.algorithm == algorithm) return &a;
  }
  return nullptr;
}

RunSummary summarize(std::span<const EpisodeRecord> records, const SummaryOptions& options) {
  if (options.final_window < 1) throw std::invalid_argument("final_window must be >= 1");
  if (records.empty()) throw std::invalid_argument("summarize: no records");

  RunSummary summary;
  summary.final_window = options.final_window;
  const Grouped grouped = group_records(records);

  for (const auto& name : ordered_algorithms(grouped)) {
    AlgorithmSummary algo;
    algo.algorithm = name;
    std::vector<double> rewards;
    std::vector<double> coverages;
    for (const auto& [seed, rows] : grouped.at(name)) {
      const std::size_t w = std::min<std::size_t>(options.final_window, rows.size());
      double reward_sum = 0.0;
      double covered_sum = 0.0;
      for (std::size_t i = rows.size() - w; i < rows.size(); ++i) {
        reward_sum += rows[i]->mean_agent_total_reward;
        covered_sum += rows[i]->landmarks_covered_final;
      }
      SeedFinal f;
      f.seed = seed;
      f.episodes = static_cast<int>(rows.size());
      f.final_reward = reward_sum / static_cast<double>(w);
      f.final_coverage = covered_sum / static_cast<double>(w);
      rewards.push_back(f.final_reward);
      coverages.push_back(f.final_coverage);
      algo.seeds.push_back(f);
    }
    algo.final_reward = summarize_values(rewards);
    algo.landmark_coverage = summarize_values(coverages);
    summary.algorithms.push_back(std::move(algo));
  }

  for (std::size_t i = 0; i < summary.algorithms.size(); ++i) {
    for (std::size_t j = i + 1; j < summary.algorithms.size(); ++j) {
      const auto& a = summary.algorithms[i];
      const auto& b = summary.algorithms[j];
      if (a.final_reward.n < 2 || b.final_reward.n < 2) continue;
      summary.comparisons.push_back(
          {a.algorithm, b.algorithm, stats::welch_t(a.final_reward, b.final_reward)});
    }
  }

  if (const AlgorithmSummary* mappo = summary.find("MAPPO")) {
    for (const auto& a : summary.algorithms) {
      if (a.algorithm == "MAPPO") continue;
      const double base = mappo->landmark_coverage.mean;
      summary.coverage_ratio_vs_mappo[a.algorithm] =
          base > 0.0 ? a.landmark_coverage.mean / base : std::numeric_limits<double>::infinity();
    }
  }
  return summary;
}

std::string summary_to_json(const RunSummary& summary) {
  Json root;
  root["schema"] = std::string(kSummarySchema);
  root["final_window"] = summary.final_window;
  Json algos = Json::array();
  for (const auto& a : summary.algorithms) {
    Json seeds = Json::array();
    for (const auto& s : a.seeds) {
      seeds.push_back({{"seed", s.seed},
                       {"episodes", s.episodes},
                       {"final_reward", s.final_reward},
                       {"final_coverage", s.final_coverage}});
    }
    algos.push_back({{"algorithm", a.algorithm},
                     {"seeds", seeds},
                     {"final_reward", summary_block(a.final_reward)},
                     {"landmark_coverage", summary_block(a.landmark_coverage)}});
  }
  root["algorithms"] = algos;
  Json comps = Json::array();
  for (const auto& c : summary.comparisons) {
    // Infinite t (zero-variance samples) serializes as null.
    comps.push_back({{"a", c.a},
                     {"b", c.b},
                     {"t", c.reward.t_statistic},
                     {"df", c.reward.degrees_of_freedom},
                     {"p", c.reward.p_value},
                     {"cohens_d", c.reward.cohens_d}});
  }
  root["comparisons"] = comps;
  Json ratios = Json::object();
  for (const auto& a : summary.algorithms) {
    const auto it = summary.coverage_ratio_vs_mappo.find(a.algorithm);
    if (it != summary.coverage_ratio_vs_mappo.end()) ratios[a.algorithm] = it->second;
  }
  root["coverage_ratio_vs_mappo"] = ratios;
  return root.dump(2) + "\n";
}

std::string format_summary_table(const RunSummary& summary) {
  std::ostringstream out;
  out << std::fixed;
  out << "final window: last " << summary.final_window << " episodes per seed\n\n";
  out << std::left << std::setw(12) << "algorithm" << std::setw(6) << "seeds" << std::setw(24)
      << "final reward" << "landmark coverage\n";
  for (const auto& a : summary.algorithms) {
    std::ostringstream reward;
    reward << std::fixed << std::setprecision(2) << a.final_reward.mean << " +- "
           << a.final_reward.std;
    std::ostringstream cov;
    cov << std::fixed << std::setprecision(3) << a.landmark_coverage.mean << " +- "
        << a.landmark_coverage.std;
    out << std::setw(12) << a.algorithm << std::setw(6) << a.final_reward.n << std::setw(24)
        << reward.str() << cov.str() << "\n";
  }
  if (!summary.comparisons.empty()) {
    out << "\npairwise final reward (Welch):\n";
    for (const auto& c : summary.comparisons) {
      out << "  " << c.a << " vs " << c.b << ": t = " << std::setprecision(3)
          << c.reward.t_statistic << ", df = " << c.reward.degrees_of_freedom
          << ", p = " << std::setprecision(4) << c.reward.p_value << ", d = " << std::setprecision(2)
          << c.reward.cohens_d << "\n";
    }
  }
  if (!summary.coverage_ratio_vs_mappo.empty()) {
    out << "\ncoverage ratio vs MAPPO:\n";
    for (const auto& a : summary.algorithms) {
      const auto it = summary.coverage_ratio_vs_mappo.find(a.algorithm);
      if (it == summary.coverage_ratio_vs_mappo.end()) continue;
      out << "  " << a.algorithm << ": " << std::setprecision(2) << it->second << "x\n";
    }
  }
  return out.str();
}

std::vector<CurveRow> compute_curves(std::span<const EpisodeRecord> records, int window,
                                     int stride) {
  if (window < 1) throw std::invalid_argument("curve window must be >= 1");
  if (stride < 1) throw std::invalid_argument("curve stride must be >= 1");
  if (records.empty()) throw std::invalid_argument("compute_curves: no records");

  std::vector<CurveRow> rows;
  const Grouped grouped = group_records(records);
  for (const auto& name : ordered_algorithms(grouped)) {
    // episode -> per-seed rolling means at that endpoint
    std::map<int, std::vector<double>> at_endpoint;
    const auto& seeds = grouped.at(name);
    for (const auto& [seed, series] : seeds) {
      const std::size_t n = series.size();
      const std::size_t w = std::min<std::size_t>(window, n);
      for (std::size_t end = w - 1; end < n; end += stride) {
        double sum = 0.0;
        for (std::size_t i = end + 1 - w; i <= end; ++i) sum += series[i]->mean_agent_total_reward;
        const double mean = sum / static_cast<double>(w);
        const int episode = series[end]->episode_index;
        rows.push_back({name, std::to_string(seed), episode, mean, 0.0});
        at_endpoint[episode].push_back(mean);
      }
    }
    for (const auto& [episode, means] : at_endpoint) {
      if (means.size() != seeds.size()) continue;
      const auto s = summarize_values(means);
      rows.push_back({name, "band", episode, s.mean, s.std});
    }
  }
  return rows;
}

void write_curves(std::ostream& out, std::span<const CurveRow> rows) {
  out << "algorithm,series,episode,mean,std\n";
  for (const auto& r : rows) {
    out << csv_escape(r.algorithm) << ',' << r.series << ',' << r.episode << ','
        << format_double(r.mean) << ',' << format_double(r.std) << '\n';
  }
}

bool ExperimentResult::all_ok() const {
  return std::all_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.ok; });
}

std::filesystem::path resolve_output_dir(const ExperimentSpec& spec) {
  if (const char* env = std::getenv("MARL_LAB_OUT"); env != nullptr && *env != '\0') return env;
  return spec.output_dir;
}

namespace {

void ensure_writable(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto probe = dir / ".write_probe";
  {
    std::ofstream f(probe);
    if (!f || !(f << "ok") || !f.flush()) {
      throw std::runtime_error("output directory is not writable: " + dir.string());
    }
  }
  std::filesystem::remove(probe, ec);
}

void write_file_atomically(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    f << content;
    f.flush();
    if (!f) throw std::runtime_error("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

struct Task {
  train::Algorithm algorithm;
  std::uint64_t seed;
};

RunOutcome execute(const ExperimentSpec& spec, const Task& task, const std::filesystem::path& out,
                   std::ostream* progress, std::mutex& progress_mutex) {
  RunOutcome outcome;
  outcome.algorithm = std::string(train::to_string(task.algorithm));
  outcome.seed = task.seed;
  const std::string stem = outcome.algorithm + "_" + std::to_string(task.seed);
  outcome.record_file = out / "records" / (stem + ".csv");

  auto say = [&](const std::string& line) {
    if (!progress) return;
    std::lock_guard lock(progress_mutex);
    *progress << line << std::endl;
  };

  std::ofstream log(out / "logs" / (stem + ".log"), std::ios::trunc);
  try {
    const train::TrainRunConfig config = spec.run_config(task.algorithm);
    train::TrainingRun run(config, task.seed);
    log << "algorithm " << outcome.algorithm << " seed " << task.seed << " episodes "
        << config.episodes << "\n";
    for (const auto& net : train::describe_networks(run.team())) {
      log << "params " << net.name << " " << net.parameters << "\n";
    }
    log.flush();

    RecordWriter writer(outcome.record_file);
    std::optional<StepLogWriter> steps;
    if (spec.step_log) {
      steps.emplace(out / "steps" / (stem + ".csv"));
      const theory::StateBucketing bucketing{config.env.n_agents, config.env.n_landmarks, 0.1};
      run.set_transition_sink([&steps, bucketing](const train::Transition& t) {
        steps->append({t.episode, bucketing.bucket(t.observation), t.action,
                       bucketing.bucket(t.next_observation)},
                      t.agent);
      });
    }

    const auto start = std::chrono::steady_clock::now();
    double window_reward = 0.0;
    int window_count = 0;
    while (run.episodes_done() < config.episodes) {
      const int first = run.episodes_done();
      const auto metrics = run.iterate();
      const double elapsed =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
              .count();
      for (std::size_t k = 0; k < metrics.size(); ++k) {
        const auto& m = metrics[k];
        EpisodeRecord r;
        r.algorithm = outcome.algorithm;
        r.seed = task.seed;
        r.episode_index = first + static_cast<int>(k);
        r.mean_agent_total_reward = m.mean_agent_total;
        r.env_reward_component = m.env_component;
        r.heuristic_component = m.heuristic_component;
        r.shaped_component = m.shaped_component;
        r.landmarks_covered_final = m.landmarks_covered_final;
        r.collision_count = m.collision_count;
        r.wall_clock_ms = spec.record_wall_clock ? elapsed : 0.0;
        writer.append(r);
        window_reward += m.mean_agent_total;
        ++window_count;
      }
      outcome.episodes_completed = run.episodes_done();
      if (outcome.episodes_completed % 100 == 0 || outcome.episodes_completed == config.episodes) {
        const auto& u = run.last_update();
        log << "episode " << outcome.episodes_completed << " mean_reward "
            << window_reward / std::max(1, window_count);
        if (!u.agents.empty()) {
          log << " policy_loss " << u.agents[0].policy_loss << " entropy " << u.agents[0].entropy;
        }
        if (!u.shapers.empty()) log << " shaper_max_abs " << u.shapers[0].max_abs_output;
        log << "\n";
        log.flush();
        say(stem + ": " + std::to_string(outcome.episodes_completed) + "/" +
            std::to_string(config.episodes) + " episodes");
        window_reward = 0.0;
        window_count = 0;
      }
    }
    writer.flush();
    if (steps) steps->flush();
    if (spec.checkpoints) run.save_checkpoints(out / "checkpoints");
    outcome.ok = true;
  } catch (const std::exception& e) {
    outcome.error = e.what();
    log << "FAILED after " << outcome.episodes_completed << " episodes: " << e.what() << "\n";
    say(stem + ": FAILED: " + outcome.error);
  }
  return outcome;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, std::ostream* progress) {
  spec.validate();
  ExperimentResult result;
  result.output_dir = resolve_output_dir(spec);
  ensure_writable(result.output_dir);
  for (const char* sub : {"records", "logs"}) {
    std::filesystem::create_directories(result.output_dir / sub);
  }
  if (spec.step_log) std::filesystem::create_directories(result.output_dir / "steps");

  std::vector<Task> tasks;
  for (auto algo : spec.algorithms) {
    for (auto seed : spec.seeds) tasks.push_back({algo, seed});
  }
  result.runs.resize(tasks.size());

  unsigned workers = spec.jobs > 0 ? static_cast<unsigned>(spec.jobs)
                                   : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(tasks.size()));
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      result.runs[i] = execute(spec, tasks[i], result.output_dir, progress, progress_mutex);
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::vector<EpisodeRecord> records;
  for (const auto& run : result.runs) {
    if (!std::filesystem::exists(run.record_file)) continue;
    auto part = read_records_file(run.record_file);
    records.insert(records.end(), part.begin(), part.end());
  }
  if (!records.empty()) {
    result.summary = summarize(records);
    write_file_atomically(result.output_dir / "summary.json", summary_to_json(*result.summary));
  }
  return result;
}

}  // namespace marl::harness
