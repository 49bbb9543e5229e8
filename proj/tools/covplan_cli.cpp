#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "covplan/errors.hpp"
#include "covplan/lemmas.hpp"
#include "covplan/oracle/suites.hpp"
#include "covplan/sim/experiments.hpp"
#include "covplan/sim/runlog.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailure = 1;
constexpr int kUsage = 2;
constexpr int kMismatch = 3;

int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("COVPLAN_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap > 0) n = n > 0 ? std::min(n, cap) : cap;
    } catch (const std::exception&) {
      throw covplan::ConfigError(std::string("COVPLAN_THREADS is not a number: ") + env);
    }
  }
  return std::max(1, n);
}

void apply_methods(covplan::sim::MethodsConfig& m, const std::string& list) {
  m.recursive = m.backsub = m.twostage = m.onestage = false;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name == "recursive")
      m.recursive = true;
    else if (name == "backsub")
      m.backsub = true;
    else if (name == "twostage")
      m.twostage = true;
    else if (name == "onestage")
      m.onestage = true;
    else
      throw covplan::ConfigError("unknown recovery method '" + name + "'");
  }
}

struct PassiveArgs {
  std::string config;
  std::string methods;
  std::string out;
  int steps = -1;
};

struct ActiveArgs {
  std::string config;
  std::string objective;
  std::string out;
  int planning_steps = -1;
  bool dump_tree = false;
};

struct VerifyArgs {
  int seeds = 100;
  std::uint64_t first_seed = 0;
  covplan::Index max_n = 200;
  std::string mutate;
  std::vector<std::string> suites;
};

int cmd_passive(const PassiveArgs& a) {
  auto config = covplan::sim::load_config(a.config);
  if (!a.methods.empty()) apply_methods(config.methods, a.methods);
  if (a.steps >= 0) config.motion.steps = a.steps;
  const auto log = covplan::sim::run_passive(config);
  covplan::sim::write_outputs(log, config, a.out);
  std::cout << "passive: " << log.steps.size() << " steps, final n=" << (log.steps.empty() ? 0 : log.steps.back().n)
            << ", output in " << a.out << '\n';
  return kOk;
}

int cmd_active(const ActiveArgs& a) {
  auto config = covplan::sim::load_config(a.config);
  if (!a.objective.empty()) config.planner.objective = covplan::sim::parse_objective(a.objective);
  if (a.planning_steps >= 0) config.planner.planning_steps = a.planning_steps;
  if (a.dump_tree) config.planner.dump_tree = true;
  std::filesystem::create_directories(a.out);
  std::ofstream dump;
  if (config.planner.dump_tree) dump.open(std::filesystem::path(a.out) / "tree.txt");
  const auto log = covplan::sim::run_active(config, config.planner.dump_tree ? &dump : nullptr);
  covplan::sim::write_outputs(log, config, a.out);
  double flat = 0.0;
  double tree = 0.0;
  for (const auto& p : log.planning) {
    flat += p.flat_seconds;
    tree += p.tree_seconds;
  }
  std::cout << "active: " << log.planning.size() << " planning steps, " << log.steps.size()
            << " executed steps, flat " << flat << " s, tree " << tree << " s, output in " << a.out << '\n';
  return kOk;
}

int cmd_verify(const VerifyArgs& a) {
  if (a.mutate == "rectangular-sign")
    covplan::set_fault(covplan::Fault::RectangularSign);
  else if (!a.mutate.empty())
    throw covplan::ConfigError("unknown mutation '" + a.mutate + "'");
  const int threads = worker_count();
  std::vector<covplan::oracle::Suite> suites;
  if (a.suites.empty())
    suites = covplan::oracle::verification_suites();
  else
    for (const auto& name : a.suites) suites.push_back(covplan::oracle::find_suite(name));

  bool ok = true;
  std::printf("%-24s %6s %8s %12s  %s\n", "suite", "cases", "failures", "worst", "result");
  std::vector<std::string> failures;
  for (const auto& s : suites) {
    const auto sum = covplan::oracle::run_suite(s, a.first_seed, a.seeds, a.max_n, threads);
    std::printf("%-24s %6d %8d %12.3e  %s\n", sum.name.c_str(), sum.cases, sum.failures, sum.worst,
                sum.failures == 0 ? "PASS" : "FAIL");
    for (std::size_t i = 0; i < sum.failing_seeds.size(); ++i)
      failures.push_back(sum.name + " seed " + std::to_string(sum.failing_seeds[i]) + ": " +
                         sum.failing_details[i]);
    ok = ok && sum.failures == 0;
  }
  for (const auto& f : failures) std::printf("FAILED %s\n", f.c_str());
  return ok ? kOk : kVerifyFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariance recovery and belief space planning experiments"};
  app.require_subcommand(1);

  PassiveArgs pa;
  auto* passive = app.add_subcommand("passive", "Follow the goal path and recover marginals by each method");
  passive->add_option("--config", pa.config, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  passive->add_option("--methods", pa.methods, "Comma list of recursive,backsub,twostage,onestage");
  passive->add_option("--out", pa.out, "Output directory")->required();
  passive->add_option("--steps", pa.steps, "Override the number of steps");

  ActiveArgs aa;
  auto* active = app.add_subcommand("active", "Plan with flat and tree evaluation and execute decisions");
  active->add_option("--config", aa.config, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  active->add_option("--objective", aa.objective, "unfocused, focused-lastpose or focused-landmarks");
  active->add_option("--out", aa.out, "Output directory")->required();
  active->add_option("--planning-steps", aa.planning_steps, "Override the number of planning steps");
  active->add_flag("--dump-tree", aa.dump_tree, "Write the action tree of every planning step");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run the randomized oracle suites");
  verify->add_option("--seeds", va.seeds, "Seeds per suite")->check(CLI::PositiveNumber);
  verify->add_option("--first-seed", va.first_seed, "First seed");
  verify->add_option("--max-n", va.max_n, "Largest prior dimension")->check(CLI::Range(12, 100000));
  verify->add_option("--mutate", va.mutate, "Inject a fault (rectangular-sign)");
  verify->add_option("--suite", va.suites, "Restrict to the named suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*passive) return cmd_passive(pa);
    if (*active) return cmd_active(aa);
    return cmd_verify(va);
  } catch (const covplan::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  } catch (const covplan::DecisionMismatch& e) {
    std::cerr << "decision mismatch: " << e.what() << '\n' << e.score_table();
    return kMismatch;
  } catch (const covplan::MethodDisagreement& e) {
    std::cerr << "method disagreement: " << e.what() << '\n';
    return kVerifyFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kVerifyFailure;
  }
}
