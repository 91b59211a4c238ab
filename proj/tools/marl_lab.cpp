// marl_lab: train, summarize and inspect multi-agent spread experiments.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "marl/harness.hpp"
#include "marl/records.hpp"
#include "marl/stats.hpp"
#include "marl/theory.hpp"

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace marl;

void print_summary_block(const Json& j) {
  std::cout << "--- summary ---\n" << j.dump() << "\n";
}

stats::SampleSummary parse_msn(const std::string& text) {
  std::stringstream ss(text);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, ',')) parts.push_back(part);
  if (parts.size() != 3) throw CLI::ValidationError("expected mean,std,n but got '" + text + "'");
  try {
    return {std::stod(parts[0]), std::stod(parts[1]), std::stoi(parts[2])};
  } catch (const std::exception&) {
    throw CLI::ValidationError("cannot parse '" + text + "' as mean,std,n");
  }
}

theory::EpisodeWindow parse_window(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("window must be begin:end");
  return {std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
}

int cmd_run(const std::string& spec_path, bool smoke, const std::string& out) {
  auto spec = harness::load_experiment_spec(spec_path);
  if (smoke) spec.smoke_mode = true;
  if (!out.empty()) spec.output_dir = out;
  const auto result = harness::run_experiment(spec, &std::cerr);
  int failed = 0;
  for (const auto& r : result.runs) {
    if (!r.ok) {
      ++failed;
      std::cerr << r.algorithm << " seed " << r.seed << " failed: " << r.error << "\n";
    }
  }
  if (result.summary) std::cout << harness::format_summary_table(*result.summary);
  std::cout << "output: " << result.output_dir.string() << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_summarize(const std::string& in, bool json, int window) {
  const auto records = harness::read_records_dir(in);
  harness::SummaryOptions options;
  options.final_window = window;
  const auto summary = harness::summarize(records, options);
  std::cout << (json ? harness::summary_to_json(summary) : harness::format_summary_table(summary));
  return 0;
}

int cmd_curves(const std::string& in, int window, int stride, const std::string& out) {
  const auto records = harness::read_records_dir(in);
  const auto rows = harness::compute_curves(records, window, stride);
  if (out.empty() || out == "-") {
    harness::write_curves(std::cout, rows);
  } else {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    harness::write_curves(f, rows);
    std::cout << "wrote " << rows.size() << " rows to " << out << "\n";
  }
  return 0;
}

int cmd_shaping_check(int instances, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> phi_dist(-10.0, 10.0);
  int identical = 0;
  for (int k = 0; k < instances; ++k) {
    const auto mdp = theory::random_mdp(6, 3, 0.9, rng);
    std::vector<double> phi(6);
    for (auto& p : phi) p = phi_dist(rng);
    const auto base = theory::value_iteration(mdp);
    const auto shaped = theory::value_iteration(theory::apply_potential_shaping(mdp, phi));
    if (base.policy == shaped.policy) ++identical;
  }
  std::cout << "potential-based shaping on " << instances
            << " random 6-state / 3-action MDPs (gamma 0.9)\n"
            << "greedy policies unchanged: " << identical << " / " << instances << "\n";
  print_summary_block({{"check", "potential_shaping"},
                       {"instances", instances},
                       {"identical", identical},
                       {"holds", identical == instances}});
  return identical == instances ? 0 : 1;
}

std::string profile_text(const theory::MatrixGame& game, const std::vector<int>& profile) {
  std::string s = "(";
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (i) s += ", ";
    const int a = profile[i];
    s += a < static_cast<int>(game.action_names.size()) ? game.action_names[a] : std::to_string(a);
  }
  return s + ")";
}

int cmd_nash_demo() {
  const auto game = theory::stag_hunt();
  const auto analysis = theory::nash_vs_global(game);
  std::cout << "stag hunt payoffs (row, column):\n"
            << "            stag     hare\n"
            << "  stag     (4, 4)   (0, 3)\n"
            << "  hare     (3, 0)   (3, 3)\n\n";
  Json nash = Json::array();
  std::cout << "pure Nash equilibria:";
  for (const auto& p : analysis.pure_nash) {
    std::cout << " " << profile_text(game, p);
    nash.push_back(p);
  }
  Json optima = Json::array();
  std::cout << "\nglobal optima (sum of payoffs):";
  for (const auto& p : analysis.global_optima) {
    std::cout << " " << profile_text(game, p);
    optima.push_back(p);
  }
  std::cout << "\nan equilibrium that is not globally optimal exists: "
            << (analysis.misaligned ? "yes" : "no") << "\n";
  print_summary_block({{"game", "stag_hunt"},
                       {"pure_nash", nash},
                       {"global_optima", optima},
                       {"misaligned", analysis.misaligned}});
  return 0;
}

int cmd_counterfactual(unsigned actions, unsigned agents) {
  const auto c = theory::counterfactual_count(actions, agents);
  const std::string joint = c.joint_combinations.str();
  const std::string expr = c.paper_expression.str();
  std::cout << "|A| = " << actions << ", n = " << agents << "\n"
            << "joint actions of the other agents, |A|^(n-1): " << joint << "\n"
            << "subsets of those joint actions, 2^(|A|^(n-1)): ";
  if (expr.size() <= 80) {
    std::cout << expr << "\n";
  } else {
    std::cout << expr.substr(0, 20) << "... (" << expr.size() << " digits)\n";
  }
  std::cout << "The first number is what a counterfactual baseline must marginalize over;\n"
               "the second counts sets of such joint actions.\n";
  print_summary_block({{"actions", actions},
                       {"agents", agents},
                       {"joint_combinations", joint},
                       {"subset_count_digits", expr.size()},
                       {"subset_count", expr.size() <= 4096 ? Json(expr) : Json(nullptr)}});
  return 0;
}

int cmd_drift(const std::string& in, const std::string& algorithm, const std::string& early_s,
              const std::string& late_s, int min_samples) {
  const auto early = parse_window(early_s);
  const auto late = parse_window(late_s);
  const std::vector<std::pair<theory::EpisodeWindow, theory::EpisodeWindow>> windows = {
      {early, late}};
  const fs::path steps_dir = fs::path(in) / "steps";
  if (!fs::is_directory(steps_dir)) {
    throw std::runtime_error("no steps/ directory under " + in + " (run with step_log = true)");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(steps_dir)) {
    const auto name = e.path().filename().string();
    if (e.path().extension() == ".csv" && name.rfind(algorithm + "_", 0) == 0) {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no step logs for " + algorithm + " in " + steps_dir.string());

  Json runs = Json::array();
  double sum = 0.0;
  int counted = 0;
  std::cout << "TV drift of empirical P(s' | s, a) between episodes [" << early.begin << ", "
            << early.end << ") and [" << late.begin << ", " << late.end << ")\n";
  for (const auto& f : files) {
    const auto log = harness::read_step_log(f);
    const auto report = theory::nonstationarity_drift(log, windows, min_samples);
    const auto& d = report.pairs.front();
    std::cout << "  " << f.filename().string() << ": ";
    if (d.mean_tv) {
      std::cout << "mean TV " << *d.mean_tv << " over " << d.cells.size() << " cells\n";
      sum += *d.mean_tv;
      ++counted;
    } else {
      std::cout << "insufficient data\n";
    }
    runs.push_back({{"file", f.filename().string()},
                    {"cells", d.cells.size()},
                    {"mean_tv", d.mean_tv ? Json(*d.mean_tv) : Json(nullptr)}});
  }
  const Json mean = counted ? Json(sum / counted) : Json(nullptr);
  if (counted) std::cout << "mean over runs: " << sum / counted << "\n";
  print_summary_block({{"algorithm", algorithm}, {"runs", runs}, {"mean_tv", mean}});
  return 0;
}

int cmd_welch(const std::string& a_text, const std::string& b_text) {
  const auto a = parse_msn(a_text);
  const auto b = parse_msn(b_text);
  const auto r = stats::welch_t(a, b);
  std::cout << "Welch t = " << r.t_statistic << ", df = " << r.degrees_of_freedom
            << ", p (two-sided) = " << r.p_value << ", Cohen's d = " << r.cohens_d << "\n";
  print_summary_block({{"t", r.t_statistic},
                       {"df", r.degrees_of_freedom},
                       {"p", r.p_value},
                       {"cohens_d", r.cohens_d}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"marl_lab: multi-agent spread experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "train every (algorithm, seed) in a spec file");
  std::string spec_path;
  std::string run_out;
  bool smoke = false;
  run->add_option("--spec", spec_path, "experiment spec file")->required()->check(CLI::ExistingFile);
  run->add_flag("--smoke", smoke, "cap episodes at 200");
  run->add_option("--out", run_out, "output directory (MARL_LAB_OUT takes precedence)");

  auto* summarize = app.add_subcommand("summarize", "final-window table from a run directory");
  std::string sum_in;
  bool sum_json = false;
  int sum_window = harness::kFinalWindow;
  summarize->add_option("--in", sum_in, "run output directory")->required();
  summarize->add_flag("--json", sum_json, "emit the JSON summary");
  summarize->add_option("--window", sum_window, "final window length")->check(CLI::PositiveNumber);

  auto* curves = app.add_subcommand("curves", "rolling-mean learning curves");
  std::string cur_in;
  std::string cur_out;
  int cur_window = 100;
  int cur_stride = 10;
  curves->add_option("--in", cur_in, "run output directory")->required();
  curves->add_option("--window", cur_window)->check(CLI::PositiveNumber);
  curves->add_option("--stride", cur_stride)->check(CLI::PositiveNumber);
  curves->add_option("--out", cur_out, "output file ('-' for stdout)");

  auto* theory_cmd = app.add_subcommand("theory", "executable checks of the theoretical claims");
  theory_cmd->require_subcommand(1);
  auto* shaping = theory_cmd->add_subcommand("shaping-check", "potential shaping preserves policies");
  int sh_instances = 100;
  std::uint64_t sh_seed = 7;
  shaping->add_option("--instances", sh_instances)->check(CLI::PositiveNumber);
  shaping->add_option("--seed", sh_seed);
  auto* nash = theory_cmd->add_subcommand("nash-demo", "pure Nash vs global optimum in stag hunt");
  auto* cf = theory_cmd->add_subcommand("counterfactual", "counterfactual joint-action counts");
  unsigned cf_actions = 5;
  unsigned cf_agents = 3;
  cf->add_option("--actions", cf_actions)->required()->check(CLI::PositiveNumber);
  cf->add_option("--agents", cf_agents)->required()->check(CLI::PositiveNumber);
  auto* drift = theory_cmd->add_subcommand("drift", "transition drift from step logs");
  std::string dr_in;
  std::string dr_algo = "IPPO";
  std::string dr_early = "0:500";
  std::string dr_late = "1500:2000";
  int dr_min = 30;
  drift->add_option("--in", dr_in, "run output directory")->required();
  drift->add_option("--algorithm", dr_algo);
  drift->add_option("--early", dr_early, "begin:end episodes");
  drift->add_option("--late", dr_late, "begin:end episodes");
  drift->add_option("--min-samples", dr_min)->check(CLI::PositiveNumber);

  auto* stats_cmd = app.add_subcommand("stats", "statistics helpers");
  stats_cmd->require_subcommand(1);
  auto* welch = stats_cmd->add_subcommand("welch", "Welch t-test from summary statistics");
  std::string w_a;
  std::string w_b;
  welch->add_option("--a", w_a, "mean,std,n")->required();
  welch->add_option("--b", w_b, "mean,std,n")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(spec_path, smoke, run_out);
    if (*summarize) return cmd_summarize(sum_in, sum_json, sum_window);
    if (*curves) return cmd_curves(cur_in, cur_window, cur_stride, cur_out);
    if (*shaping) return cmd_shaping_check(sh_instances, sh_seed);
    if (*nash) return cmd_nash_demo();
    if (*cf) return cmd_counterfactual(cf_actions, cf_agents);
    if (*drift) return cmd_drift(dr_in, dr_algo, dr_early, dr_late, dr_min);
    if (*welch) return cmd_welch(w_a, w_b);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
