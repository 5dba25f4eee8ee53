// ctxeng: synthetic data generation, preprocessing, training, tuning,
// benchmark suites, explanations and figures from one configuration.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ctxeng/cli/commands.hpp"

using namespace ctxeng;
using namespace ctxeng::cli;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  bool paper_scale = false;
  RunOptions run;
};

void add_common(CLI::App* sub, Common& c, bool with_run_dir = true) {
  sub->add_option("-c,--config", c.config_file, "configuration file (section.key = value lines)");
  sub->add_option("--set", c.sets, "override, e.g. --set bench.repetitions=3")->take_all();
  sub->add_flag("--paper-scale", c.paper_scale, "original-study preset (repetitions, budget, lengths)");
  if (with_run_dir) {
    sub->add_option("--run-dir", c.run.run_dir, "output directory (default: timestamped under output.dir)");
    sub->add_option("--jobs", c.run.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--deterministic", c.run.deterministic, "omit timestamps and wall times from outputs");
    sub->add_flag("-q,--quiet", c.run.quiet, "no progress lines on stderr");
  }
}

RunConfig resolve_config(const Common& c) {
  Assignments file, over;
  if (!c.config_file.empty())
    file = parse_text(synthgen::io_detail::read_file(c.config_file), c.config_file);
  for (const auto& s : c.sets) over.push_back(parse_assignment(s));
  RunConfig cfg = resolve(file, over, c.paper_scale);
  cfg.bench.jobs = c.run.jobs;
  cfg.bench.record_time = !c.run.deterministic;
  return cfg;
}

int exit_code(ErrorKind k) { return static_cast<int>(k); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctxeng: contextual engagement modelling toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("ctxeng ") + kToolVersion);

  Common common;
  std::string data_dir, bundle, checkpoint, sweep_file, importance_file;
  std::vector<std::string> reports;

  auto* datagen = app.add_subcommand("datagen", "generate a synthetic event log and context tables");
  auto* prepare = app.add_subcommand("prepare", "build the feature bundle from generated data");
  auto* train = app.add_subcommand("train", "train one model (training.* keys) and save a checkpoint");
  auto* tune = app.add_subcommand("tune", "hyperparameter search for one model (training.model)");
  auto* ablate = app.add_subcommand("ablate", "context ablation suite (bench.models)");
  auto* sweep = app.add_subcommand("sweep", "sequence-length sweep per channel");
  auto* cross = app.add_subcommand("cross", "cross-sectional dense models 8 and 9");
  auto* expl = app.add_subcommand("explain", "Shapley-value importance for a dense model");
  auto* plot = app.add_subcommand("plot", "render SVG figures from report files");
  auto* config = app.add_subcommand("config", "print the resolved configuration");

  for (auto* s : {datagen, prepare, train, tune, ablate, sweep, cross, expl, plot}) add_common(s, common);
  add_common(config, common, false);
  prepare->add_option("--data", data_dir, "directory written by datagen")->required();
  for (auto* s : {train, tune, ablate, sweep, cross, expl})
    s->add_option("--bundle", bundle, "feature bundle written by prepare")->required();
  expl->add_option("--checkpoint", checkpoint, "dense model checkpoint (default: train one)");
  plot->add_option("--report", reports, "report.csv files")->take_all();
  plot->add_option("--sweep", sweep_file, "sweep.csv");
  plot->add_option("--importance", importance_file, "importance.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::invalid_argument);
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  std::unique_ptr<Run> run;
  try {
    const RunConfig cfg = resolve_config(common);
    if (name == "config") {
      std::cout << to_text(cfg);
      return 0;
    }
    run = std::make_unique<Run>(name, cfg, common.run);
    if (name == "datagen") cmd_datagen(*run, cfg);
    else if (name == "prepare") cmd_prepare(*run, cfg, data_dir);
    else if (name == "train") cmd_train(*run, cfg, bundle);
    else if (name == "tune") cmd_tune(*run, cfg, bundle);
    else if (name == "ablate") cmd_ablate(*run, cfg, bundle);
    else if (name == "sweep") cmd_sweep(*run, cfg, bundle);
    else if (name == "cross") cmd_cross(*run, cfg, bundle);
    else if (name == "explain") cmd_explain(*run, cfg, bundle, checkpoint);
    else if (name == "plot") cmd_plot(*run, reports, sweep_file, importance_file);
    run->finish();
    std::cout << "run directory " << run->dir() << "\n";
    return 0;
  } catch (const ctxeng::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (run) {
      run->fail(e.what());
      std::cerr << "partial outputs kept in " << run->dir() << "\n";
    }
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (run) run->fail(e.what());
    return exit_code(ErrorKind::io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (run) run->fail(e.what());
    return exit_code(ErrorKind::invariant);
  }
}
