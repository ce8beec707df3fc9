#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <queue>
#include <random>
#include <unordered_map>
#include <vector>

#include "tsic/cache.hpp"
#include "tsic/model.hpp"

// Discrete-time cluster simulator: seeded workload generation, admission
// against the bandwidth/compute/storage constraints, the three-part delay
// model, image pull dynamics through the cache policy, and an event stream
// of `request` / `reward` events consumed by the decision loop.
namespace tsic::sim {

struct Range {
  double min = 0.0;
  double max = 0.0;
  double sample(std::mt19937_64& rng) const;
};

struct SimConfig {
  int num_nodes = 5;
  int num_services = 6;
  int num_images = 6;
  std::int64_t num_tasks = 200;

  double slot_duration_s = 1.0;
  double base_latency_s = 0.1;
  double distance_bandwidth_factor = 0.5;
  double arrival_rate_per_slot = 1.0;

  Range cpu_capacity{8.0, 16.0};
  Range mem_capacity_mb{2048.0, 4096.0};
  std::vector<double> storage_tiers_mb{2048.0, 4096.0, 8192.0};
  Range bandwidth_capacity_mbps{60.0, 100.0};
  Range cloud_bandwidth_mbps{20.0, 40.0};
  int initial_images_per_node = 3;

  Range task_data_mb{10.0, 60.0};
  Range task_cpu{0.5, 2.0};
  Range task_mem_mb{64.0, 256.0};
  Range task_bandwidth_mbps{5.0, 15.0};

  Range image_size_mb{253.07, 458.73};
  Range service_start_s{0.5, 1.5};
  Range service_work_units{5.0, 20.0};
  // Empty means Zipf(1.0) over the services.
  std::vector<double> popularity_weights;

  double penalty_multiplier = 2.0;
  double initial_penalty_s = 60.0;
  std::uint64_t rng_seed = 1;

  void validate() const;  // throws std::invalid_argument
  std::vector<double> resolved_popularity() const;
};

struct Catalog {
  std::vector<Image> images;
  std::vector<Service> services;
};

// Images and services are drawn from the seeded config so that every run
// with the same config sees the same catalog.
Catalog build_catalog(const SimConfig& cfg);

std::vector<Task> generate_workload(const SimConfig& cfg);

// One task per line: task_id,arrival_slot,service_id,data_mb,cpu,mem,bw,x,y
void save_workload_csv(const std::filesystem::path& path,
                       const std::vector<Task>& tasks);
std::vector<Task> load_workload_csv(const std::filesystem::path& path);

enum class EventKind { request, reward };
enum class TaskOutcome { completed, rejected, uncacheable };

struct SimEvent {
  EventKind kind = EventKind::request;
  std::int64_t slot = 0;
  TaskId task_id = 0;
  // reward payload
  DelayRecord delay;
  TaskOutcome outcome = TaskOutcome::completed;
  NodeId node = -1;
};

struct StepResult {
  TaskOutcome outcome = TaskOutcome::completed;
  DelayRecord delay;
  std::int64_t reward_slot = 0;
  std::vector<ImageId> evictions;
  bool pulled = false;
};

struct CachingOutcome {
  bool ok = false;  // false: image cannot fit even with an empty cache
  std::vector<ImageId> evicted;
  bool pulled = false;
};

double communication_delay(const Task& task, const NodeState& node,
                           double base_latency_s, double distance_factor);
double computation_delay(const Task& task, const Service& service);

class Simulator {
 public:
  Simulator(SimConfig cfg, cache::Variant cache_variant,
            std::size_t fixed_slots);
  Simulator(SimConfig cfg, cache::Variant cache_variant,
            std::size_t fixed_slots, std::vector<Task> workload);

  // Pops events in (slot, reward-before-request, task id) order. Popping a
  // completed task's reward releases its resources first, so same-slot
  // arrivals see the freed capacity.
  std::optional<SimEvent> next_event();

  // Applies a scheduling decision for the task of the last `request`
  // event. Feasible tasks are admitted and get a future reward event;
  // infeasible ones get a penalty record (no resource mutation) flagged
  // rejected/uncacheable. Unknown node ids throw.
  StepResult step(NodeId action, const Task& task);

  // Executes a caching action: pull image m onto node n, evicting by the
  // cache policy as needed. Already-cached images just get touched.
  CachingOutcome apply_caching(ImageId m, NodeId n);

  // Pull + start wait for the task on this node; pulls mark the image
  // cached, so only the first task of a burst pays the download.
  double waiting_delay(const Task& task, NodeId node_id);

  const SimConfig& config() const { return cfg_; }
  const Catalog& catalog() const { return catalog_; }
  const std::vector<Task>& workload() const { return workload_; }
  const std::vector<NodeState>& nodes() const { return nodes_; }
  NodeState& node(NodeId n);
  cache::CacheManager& cache() { return cache_manager_; }
  const cache::CacheManager& cache() const { return cache_manager_; }

  std::int64_t current_slot() const { return current_slot_; }
  const Task& task(TaskId id) const;
  ImageId image_of_service(ServiceId v) const;
  ImageId image_of_task(const Task& t) const;

  std::int64_t failure_count() const { return failures_; }
  std::int64_t rejected_count() const { return rejected_; }
  std::int64_t uncacheable_count() const { return uncacheable_; }
  double worst_feasible_total_s() const { return worst_feasible_total_; }
  const std::unordered_map<TaskId, NodeId>& resident_tasks() const {
    return resident_;
  }

 private:
  struct EventOrder {
    bool operator()(const SimEvent& a, const SimEvent& b) const;
  };

  void init_cluster();
  void seed_requests();
  double penalty_delay_s() const;
  SimEvent make_completion(const Task& task, TaskOutcome outcome,
                           const DelayRecord& delay, NodeId node);

  SimConfig cfg_;
  Catalog catalog_;
  std::vector<Task> workload_;
  std::vector<NodeState> nodes_;
  cache::CacheManager cache_manager_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, EventOrder> events_;
  std::unordered_map<TaskId, NodeId> resident_;
  std::vector<double> pull_busy_until_s_;
  std::int64_t current_slot_ = 0;
  std::int64_t failures_ = 0;
  std::int64_t rejected_ = 0;
  std::int64_t uncacheable_ = 0;
  double worst_feasible_total_ = 0.0;
};

}  // namespace tsic::sim
