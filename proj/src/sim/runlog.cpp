#include "covplan/sim/runlog.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "covplan/errors.hpp"

namespace covplan::sim {

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid)));
}

void write_runlog_csv(const RunLog& log, std::ostream& out) {
  out << kRunLogHeader << " mode=" << log.mode << '\n';
  out << "step,n,m,involved_dim,relin_poses,relin_landmarks,new_landmarks,reobserved,loop_closure,goal";
  const bool active = log.mode == "active";
  if (active) {
    out << ",planning_step,action";
  } else {
    out << ",fallback";
    for (std::size_t i = 1; i < log.methods.size(); ++i)
      out << ",absdiff_" << log.methods[i] << ",reldiff_" << log.methods[i];
  }
  out << '\n';
  for (const auto& r : log.steps) {
    out << r.step << ',' << r.n << ',' << r.m << ',' << r.involved_dim << ',' << r.relinearized_poses << ','
        << r.relinearized_landmarks << ',' << r.new_landmarks << ',' << r.reobserved << ','
        << int(r.loop_closure) << ',' << r.goal;
    if (active) {
      out << ',' << r.planning_step << ',' << r.action;
    } else {
      out << ',' << int(r.fallback);
      for (std::size_t i = 0; i < r.max_abs_diff.size(); ++i)
        out << ',' << sci(r.max_abs_diff[i]) << ',' << sci(r.max_rel_diff[i]);
    }
    out << '\n';
  }
}

void write_timing_csv(const RunLog& log, std::ostream& out) {
  if (log.mode == "active") {
    out << "planning_step,step,n,candidates,tree_nodes,flat_prior_dim,tree_root_dim,flat_s,tree_s\n";
    for (const auto& p : log.planning)
      out << p.planning_step << ',' << p.step << ',' << p.n << ',' << p.candidates << ',' << p.tree_nodes
          << ',' << p.flat_prior_dim << ',' << p.tree_root_dim << ',' << sci(p.flat_seconds) << ','
          << sci(p.tree_seconds) << '\n';
    return;
  }
  out << "step,n,loop_closure,fallback";
  for (const auto& m : log.methods) out << ',' << m << "_s";
  out << '\n';
  for (const auto& t : log.timing) {
    out << t.step << ',' << t.n << ',' << int(t.loop_closure) << ',' << int(t.fallback);
    for (double s : t.seconds) out << ',' << sci(s);
    out << '\n';
  }
}

void write_scores_csv(const RunLog& log, std::ostream& out) {
  out << "planning_step,candidate,flat_utility,tree_utility,cost\n";
  char buf[128];
  for (const auto& s : log.scores) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.12e,%.12e,%.12e\n", s.planning_step, s.candidate, s.flat, s.tree,
                  s.cost);
    out << buf;
  }
}

std::string summary_json(const RunLog& log, const ScenarioConfig& config) {
  nlohmann::ordered_json j;
  j["mode"] = log.mode;
  j["config_hash"] = config_hash(config);
  j["seed"] = config.seed;
  j["steps"] = log.steps.size();
  j["final_n"] = log.steps.empty() ? 0 : log.steps.back().n;
  Index max_m = 0;
  int closures = 0;
  int fallbacks = 0;
  for (const auto& r : log.steps) {
    max_m = std::max(max_m, r.m);
    closures += r.loop_closure;
    fallbacks += r.fallback;
  }
  j["max_m"] = max_m;
  j["loop_closure_steps"] = closures;
  j["fallback_steps"] = fallbacks;
  if (log.mode == "active") {
    j["objective"] = log.objective;
    double flat = 0.0;
    double tree = 0.0;
    int agree = 0;
    for (const auto& p : log.planning) {
      flat += p.flat_seconds;
      tree += p.tree_seconds;
      agree += p.flat_best == p.tree_best;
    }
    j["planning_steps"] = log.planning.size();
    j["identical_decisions"] = agree;
    j["flat_total_s"] = flat;
    j["tree_total_s"] = tree;
  } else {
    auto& methods = j["methods"];
    for (std::size_t i = 0; i < log.methods.size(); ++i) {
      std::vector<double> all;
      std::vector<double> regular;
      double total = 0.0;
      for (const auto& t : log.timing) {
        all.push_back(t.seconds[i]);
        total += t.seconds[i];
        if (!t.loop_closure && !t.fallback) regular.push_back(t.seconds[i]);
      }
      nlohmann::ordered_json m;
      m["total_s"] = total;
      m["median_s"] = median(all);
      m["median_regular_s"] = median(regular);
      if (i > 0) {
        double abs_diff = 0.0;
        double rel_diff = 0.0;
        for (const auto& r : log.steps) {
          abs_diff = std::max(abs_diff, r.max_abs_diff[i - 1]);
          rel_diff = std::max(rel_diff, r.max_rel_diff[i - 1]);
        }
        m["max_abs_diff"] = abs_diff;
        m["max_rel_diff"] = rel_diff;
      }
      methods[log.methods[i]] = m;
    }
  }
  return j.dump(2) + "\n";
}

void write_outputs(const RunLog& log, const ScenarioConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "runlog.csv");
    write_runlog_csv(log, out);
  }
  {
    auto out = open_out(dir / "timing.csv");
    write_timing_csv(log, out);
  }
  if (log.mode == "active") {
    auto out = open_out(dir / "scores.csv");
    write_scores_csv(log, out);
  }
  auto out = open_out(dir / "summary.json");
  out << summary_json(log, config);
}

}  // namespace covplan::sim
