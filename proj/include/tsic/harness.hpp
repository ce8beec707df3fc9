#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tsic/agent.hpp"
#include "tsic/cache.hpp"
#include "tsic/qnet.hpp"
#include "tsic/sim.hpp"

// Experiment runner: builds the (sweep value x policy x cache x seed) grid,
// runs each cell deterministically, and emits one CSV row per cell.
namespace tsic::harness {

enum class Policy { TSIC, GRD, RR };

std::string policy_name(Policy p);
std::optional<Policy> policy_from_name(const std::string& name);

enum class SweepAxis { none, lfu_size, node_count, task_count };

std::string axis_name(SweepAxis a);
std::optional<SweepAxis> axis_from_name(const std::string& name);

struct ExperimentConfig {
  sim::SimConfig sim;
  qnet::TrainConfig train;
  agent::AgentConfig agent;
  std::vector<Policy> policies{Policy::TSIC, Policy::GRD, Policy::RR};
  std::vector<cache::Variant> caches{cache::Variant::SizeWeighted};
  int lfu_fixed_size = 4;
  SweepAxis sweep_axis = SweepAxis::none;
  std::vector<std::int64_t> sweep_values{0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int jobs = 0;  // 0: hardware concurrency

  void validate() const;
};

struct MetricsRow {
  std::int64_t sweep_value = 0;
  Policy policy = Policy::TSIC;
  cache::Variant cache = cache::Variant::SizeWeighted;
  std::uint64_t seed = 0;
  double mean_comm_s = 0.0;
  double mean_wait_s = 0.0;
  double mean_comp_s = 0.0;
  double mean_total_s = 0.0;
  std::int64_t failures = 0;
};

// JSON round trip for ExperimentConfig; missing fields keep defaults.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json_text(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg,
                 const std::filesystem::path& path);

struct RunOptions {
  // When set, the eval-episode decision trace of the grid's first cell is
  // collected here.
  std::vector<agent::TraceRow>* first_cell_trace = nullptr;
  // When set, the trained network of the first TSIC cell is saved here.
  std::optional<std::filesystem::path> save_policy;
  // When set, all TSIC cells start from this checkpoint instead of fresh
  // weights (dims must match every cell).
  std::optional<std::filesystem::path> load_policy;
};

std::vector<MetricsRow> run_experiment(const ExperimentConfig& cfg,
                                       const RunOptions& opts = {});

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);
void save_metrics_csv(const std::vector<MetricsRow>& rows,
                      const std::filesystem::path& path);

std::string trace_to_csv(const std::vector<agent::TraceRow>& rows);

// Desk-scale replicas of the delay studies: cache-variant comparison over
// the fixed-LFU size axis, node-count sweep, and task-count sweep.
ExperimentConfig preset_fig3();
ExperimentConfig preset_fig4();
ExperimentConfig preset_fig5();
std::optional<ExperimentConfig> preset_by_name(const std::string& name);

}  // namespace tsic::harness
