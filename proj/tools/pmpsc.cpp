// pmpsc: collect -> design -> train -> validate -> report on the car benchmark.
// Every stage reads only artifacts registered in <run>/manifest.json and exits
// non-zero when its own checks fail.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pmpsc/errors.hpp"
#include "pmpsc/io.hpp"
#include "pmpsc/pipeline.hpp"

namespace {

using namespace pmpsc;
using io::format_double;
using io::Manifest;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kError = 2;

RunConfig load_config(const Manifest& m) { return RunConfig::from_toml_string(m.read_artifact("config")); }

int finish(Manifest& m, const std::string& stage, const std::string& started, bool passed) {
  m.record_stage(stage, started, passed);
  m.save();
  std::printf("%s: %s\n", stage.c_str(), passed ? "PASS" : "FAIL");
  return passed ? kOk : kCheckFailed;
}

int cmd_collect(const std::string& config_path, std::string run_dir) {
  const std::string started = io::utc_timestamp();
  RunConfig cfg = RunConfig::from_toml_file(config_path);
  if (run_dir.empty()) run_dir = cfg.output_dir;
  Manifest m(run_dir);  // a fresh collect starts a fresh manifest
  const std::string toml = cfg.to_toml();
  m.set_config(toml);
  m.write_artifact("config", "config.toml", toml);
  const Dataset d = collect_data(cfg);
  m.write_artifact("dataset", "dataset.csv", io::dataset_to_csv(d));
  std::printf("collected %zu records into %s\n", d.size(), m.path_of("dataset.csv").c_str());
  return finish(m, "collect", started, static_cast<int>(d.size()) == cfg.excitation.samples);
}

int cmd_design(const std::string& run_dir) {
  const std::string started = io::utc_timestamp();
  Manifest m = Manifest::load(run_dir);
  const RunConfig cfg = load_config(m);
  const Dataset d = io::dataset_from_csv(m.read_artifact("dataset"));
  DesignResult des = [&] {
    try {
      return design_pipeline(cfg, d);
    } catch (const EmptyTightening& e) {
      m.record_stage("design", started, false);
      m.save();
      throw;
    }
  }();
  const Controller ctl = controller_of(des);
  m.write_artifact("posterior", "posterior.json", io::posterior_to_json(des.posterior));
  m.write_artifact("controller", "controller.json", io::controller_to_json(ctl));
  m.write_artifact("terminal_initial", "terminal_initial.json", io::terminal_to_json(des.terminal));
  const std::string report = io::design_report_json(des);
  m.write_artifact("design_report", "design_report.json", report);
  std::cout << report;

  // The lateral bound must stay a proper subset of |y| <= y_max.
  const auto [lo, hi] = des.tight.X.box_bounds();
  const bool y_ok = hi[1] > 0 && hi[1] < cfg.limits.y_max && -lo[1] > 0 && -lo[1] < cfg.limits.y_max;
  return finish(m, "design", started, y_ok);
}

std::string training_csv(const TrainingResult& r) {
  std::ostringstream out;
  out << "episode,total_cost,tracking,cert_penalty,violations,certified_fraction,aborted,terminal_generation\n";
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const auto& rec = r.records[i];
    out << rec.episode << ',' << format_double(rec.cost.total) << ',' << format_double(rec.cost.tracking) << ','
        << format_double(rec.cost.certification_penalty) << ',' << rec.violations << ','
        << format_double(rec.certified_fraction) << ',' << rec.aborted << ',' << r.terminal_generation[i]
        << '\n';
  }
  return out.str();
}

std::string trajectory_csv(const EpisodeLog& log) {
  std::ostringstream out;
  out << "step";
  for (int i = 0; i < 6; ++i) out << ",x" << i;
  for (int i = 0; i < 6; ++i) out << ",xref" << i;
  out << ",uL0,uL1,u0,u1,certified,modified,fallback\n";
  for (std::size_t k = 0; k < log.x.size(); ++k) {
    out << k;
    for (int i = 0; i < 6; ++i) out << ',' << format_double(log.x[k][i]);
    for (int i = 0; i < 6; ++i) out << ',' << format_double(log.x_ref[k][i]);
    for (int i = 0; i < 2; ++i) out << ',' << format_double(log.u_learn[k][i]);
    for (int i = 0; i < 2; ++i) out << ',' << format_double(log.u[k][i]);
    const bool modified = (log.u[k] - log.u_learn[k]).norm() > 1e-6;
    out << ',' << int(log.certified[k]) << ',' << int(modified) << ',' << int(log.fallback[k]) << '\n';
  }
  return out.str();
}

struct ArmSummary {
  long steps = 0, violating_steps = 0;
  int violating_episodes = 0, aborted = 0;
};

ArmSummary summarize(const TrainingResult& r, int steps_per_episode) {
  ArmSummary s;
  for (const auto& rec : r.records) {
    s.steps += steps_per_episode;
    s.violating_steps += rec.violations;
    s.violating_episodes += rec.violations > 0;
    s.aborted += rec.aborted;
  }
  return s;
}

int cmd_train(const std::string& run_dir) {
  const std::string started = io::utc_timestamp();
  Manifest m = Manifest::load(run_dir);
  const RunConfig cfg = load_config(m);
  const Controller ctl = io::controller_from_json(m.read_artifact("controller"));
  auto terminal = std::make_shared<TerminalSet>(io::terminal_from_json(m.read_artifact("terminal_initial")));
  const int L = cfg.train.ars.episode_length;

  const TrainingResult filt = run_training(cfg, ctl, terminal, true, cfg.train.episodes, cfg.seed);
  m.write_artifact("training_filter", "training_filter.csv", training_csv(filt));
  for (const auto& [ep, log] : filt.trajectories) {
    char name[64];
    std::snprintf(name, sizeof name, "trajectories/filter_%04d.csv", ep);
    m.write_artifact(std::string("trajectory_filter_") + std::to_string(ep), name, trajectory_csv(log));
  }
  m.write_artifact("policy", "policy.json", io::policy_to_json(filt.policy));
  m.write_artifact("terminal_trained", "terminal_trained.json", io::terminal_to_json(*terminal));
  const ArmSummary fs = summarize(filt, L);

  std::ostringstream viol;
  viol << "arm,episodes,steps,violating_steps,violating_episodes,aborted\n";
  viol << "filter," << filt.records.size() << ',' << fs.steps << ',' << fs.violating_steps << ','
       << fs.violating_episodes << ',' << fs.aborted << '\n';
  if (cfg.train.baseline_episodes > 0) {
    const TrainingResult base = run_training(cfg, ctl, nullptr, false, cfg.train.baseline_episodes, cfg.seed + 1);
    m.write_artifact("training_baseline", "training_baseline.csv", training_csv(base));
    for (const auto& [ep, log] : base.trajectories) {
      char name[64];
      std::snprintf(name, sizeof name, "trajectories/baseline_%04d.csv", ep);
      m.write_artifact(std::string("trajectory_baseline_") + std::to_string(ep), name, trajectory_csv(log));
    }
    const ArmSummary bs = summarize(base, L);
    viol << "baseline," << base.records.size() << ',' << bs.steps << ',' << bs.violating_steps << ','
         << bs.violating_episodes << ',' << bs.aborted << '\n';
  }
  m.write_artifact("violations", "violations.csv", viol.str());
  std::cout << viol.str();

  const double frac = fs.steps ? static_cast<double>(fs.violating_steps) / fs.steps : 0.0;
  return finish(m, "train", started, fs.aborted == 0 && frac <= 1.0 - cfg.design.p_x);
}

int cmd_validate(const std::string& run_dir, int seeds_override) {
  const std::string started = io::utc_timestamp();
  Manifest m = Manifest::load(run_dir);
  RunConfig cfg = load_config(m);
  if (seeds_override > 0) cfg.validate.seeds = seeds_override;
  const Controller ctl = io::controller_from_json(m.read_artifact("controller"));
  const std::string tname = m.has_artifact("terminal_trained") ? "terminal_trained" : "terminal_initial";
  auto terminal = std::make_shared<TerminalSet>(io::terminal_from_json(m.read_artifact(tname)));
  const LinearPolicy policy =
      m.has_artifact("policy") ? io::policy_from_json(m.read_artifact("policy")) : initial_policy(cfg);

  const ChanceReport rep = validate_car_chance(cfg, ctl, terminal, policy);
  std::ostringstream out;
  out << "k,px,px_lo,pu,pu_lo\n";
  for (std::size_t k = 0; k < rep.px.size(); ++k)
    out << k << ',' << format_double(rep.px[k]) << ',' << format_double(rep.px_lo[k]) << ','
        << format_double(rep.pu[k]) << ',' << format_double(rep.pu_lo[k]) << '\n';
  m.write_artifact("chance", "chance.csv", out.str());
  double min_x = 1, min_u = 1;
  for (std::size_t k = 0; k < rep.px.size(); ++k) {
    min_x = std::min(min_x, rep.px_lo[k]);
    min_u = std::min(min_u, rep.pu_lo[k]);
  }
  nlohmann::json j{{"seeds", rep.seeds},         {"steps", rep.px.size()},  {"p_x", rep.p_x},
                   {"p_u", rep.p_u},             {"min_px_lo", min_x},      {"min_pu_lo", min_u},
                   {"fallbacks", rep.fallbacks}, {"non_optimal", rep.non_optimal}, {"pass", rep.pass},
                   {"terminal_set", tname}};
  m.write_artifact("chance_summary", "chance.json", j.dump(1) + "\n");
  std::cout << j.dump(1) << "\n";
  return finish(m, "validate", started, rep.pass);
}

int cmd_report(const std::string& run_dir) {
  const Manifest m = Manifest::load(run_dir);
  if (m.artifacts().empty()) {
    std::fprintf(stderr, "no manifest in %s\n", run_dir.c_str());
    return kCheckFailed;
  }
  std::printf("run %s\nconfig sha256 %s\n", run_dir.c_str(), m.config_hash().c_str());
  std::printf("artifacts: %zu\n", m.artifacts().size());
  bool ok = true;
  for (const auto& p : m.verify()) {
    std::printf("  integrity: %s\n", p.c_str());
    ok = false;
  }
  for (const auto& s : m.stages()) {
    std::printf("  stage %-9s %s  (%s .. %s)\n", s.name.c_str(), s.passed ? "PASS" : "FAIL", s.started.c_str(),
                s.finished.c_str());
    ok = ok && s.passed;
  }
  for (const char* name : {"design_report", "violations", "chance_summary"})
    if (m.has_artifact(name)) std::printf("--- %s\n%s", name, m.read_artifact(name).c_str());
  std::printf("report: %s\n", ok ? "PASS" : "FAIL");
  return ok ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic model predictive safety certification on the car benchmark"};
  app.require_subcommand(1);
  std::string config, run;
  int seeds = 0;

  auto* collect = app.add_subcommand("collect", "excitation rollout -> dataset.csv");
  collect->add_option("-c,--config", config, "TOML run configuration")->required()->check(CLI::ExistingFile);
  collect->add_option("-r,--run", run, "run directory (default: output_dir from the config)");
  auto* design = app.add_subcommand("design", "model fit, tubes, tightened sets, initial terminal set");
  auto* train = app.add_subcommand("train", "ARS with the filter in the loop, plus the clipped baseline arm");
  auto* validate = app.add_subcommand("validate", "Monte Carlo chance-constraint check");
  validate->add_option("--seeds", seeds, "override the number of Monte Carlo runs");
  auto* report = app.add_subcommand("report", "verify artifacts and summarize the run");
  for (auto* sub : {design, train, validate, report})
    sub->add_option("-r,--run", run, "run directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*collect) return cmd_collect(config, run);
    if (*design) return cmd_design(run);
    if (*train) return cmd_train(run);
    if (*validate) return cmd_validate(run, seeds);
    if (*report) return cmd_report(run);
  } catch (const pmpsc::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kError;
  }
  return kError;
}
