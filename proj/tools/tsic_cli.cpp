#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tsic/harness.hpp"
#include "tsic/kernels.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_path,
            const std::string& trace_path, const std::string& save_policy,
            const std::string& load_policy, int jobs) {
  auto cfg = tsic::harness::load_config(config_path);
  if (jobs > 0) cfg.jobs = jobs;

  tsic::harness::RunOptions opts;
  std::vector<tsic::agent::TraceRow> trace;
  if (!trace_path.empty()) opts.first_cell_trace = &trace;
  if (!save_policy.empty()) opts.save_policy = save_policy;
  if (!load_policy.empty()) opts.load_policy = load_policy;

  auto rows = tsic::harness::run_experiment(cfg, opts);
  tsic::harness::save_metrics_csv(rows, out_path);
  if (!trace_path.empty()) {
    std::ofstream out(trace_path);
    out << tsic::harness::trace_to_csv(trace);
  }
  std::cout << rows.size() << " rows -> " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge cluster scheduling and image caching experiments"};
  app.require_subcommand(1);

  std::string config_path, out_path, trace_path, save_policy, load_policy;
  int jobs = 0;

  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  run->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  run->add_option("--out", out_path, "Metrics CSV output")->required();
  run->add_option("--trace", trace_path,
                  "Decision trace CSV of the grid's first cell");
  run->add_option("--save-policy", save_policy,
                  "Save the first TSIC cell's network checkpoint");
  run->add_option("--load-policy", load_policy,
                  "Start TSIC cells from this checkpoint");
  run->add_option("--jobs", jobs, "Parallel runs (0 = all cores)");

  std::string preset_name, config_out;
  int override_seeds = 0;
  std::int64_t override_tasks = 0;
  auto* preset = app.add_subcommand("preset", "Run a built-in sweep preset");
  preset->add_option("name", preset_name, "fig3 | fig4 | fig5")->required();
  preset->add_option("--out", out_path, "Metrics CSV output")->required();
  preset->add_option("--config-out", config_out,
                     "Also dump the preset's config JSON");
  preset->add_option("--seeds", override_seeds, "Use seeds 1..N instead");
  preset->add_option("--tasks", override_tasks, "Override task count");
  preset->add_option("--jobs", jobs, "Parallel runs (0 = all cores)");

  auto* trace = app.add_subcommand(
      "trace", "Decision trace of the first grid cell of a config");
  trace->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  trace->add_option("--out", trace_path, "Trace CSV (default: stdout)");

  auto* workload =
      app.add_subcommand("workload", "Export the generated task workload");
  workload->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  workload->add_option("--out", out_path, "Workload CSV output")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, out_path, trace_path, save_policy,
                     load_policy, jobs);

    if (preset->parsed()) {
      auto cfg = tsic::harness::preset_by_name(preset_name);
      if (!cfg) {
        std::cerr << "unknown preset: " << preset_name << "\n";
        return 1;
      }
      if (override_seeds > 0) {
        cfg->seeds.clear();
        for (int s = 1; s <= override_seeds; ++s)
          cfg->seeds.push_back(std::uint64_t(s));
      }
      if (override_tasks > 0) cfg->sim.num_tasks = override_tasks;
      if (jobs > 0) cfg->jobs = jobs;
      if (!config_out.empty()) tsic::harness::save_config(*cfg, config_out);
      auto rows = tsic::harness::run_experiment(*cfg);
      tsic::harness::save_metrics_csv(rows, out_path);
      std::cout << rows.size() << " rows -> " << out_path << " (kernels: "
                << tsic::kernels::isa_name(tsic::kernels::active_isa())
                << ")\n";
      return 0;
    }

    if (trace->parsed()) {
      auto cfg = tsic::harness::load_config(config_path);
      std::vector<tsic::agent::TraceRow> rows;
      tsic::harness::RunOptions opts;
      opts.first_cell_trace = &rows;
      tsic::harness::run_experiment(cfg, opts);
      std::string csv = tsic::harness::trace_to_csv(rows);
      if (trace_path.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(trace_path);
        out << csv;
      }
      return 0;
    }

    if (workload->parsed()) {
      auto cfg = tsic::harness::load_config(config_path);
      auto tasks = tsic::sim::generate_workload(cfg.sim);
      tsic::sim::save_workload_csv(out_path, tasks);
      std::cout << tasks.size() << " tasks -> " << out_path << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
