#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "tsic/qnet.hpp"
#include "tsic/sim.hpp"

// Decision layer: state encoding, masked epsilon-greedy action selection,
// scheduling/caching rewards with the popularity window, the joint
// scheduling+caching loop, and the greedy / round-robin baselines.
namespace tsic::agent {

struct AgentConfig {
  double epsilon_train = 0.5;
  double epsilon_eval = 0.0;
  int caching_update_slots = 10;  // also the popularity reward window
  int train_episodes = 3;
};

// ---- state encoding ----

struct EncodeContext {
  int num_services = 0;
  double max_task_data_mb = 1.0;
};

// Node block: per node [cpu, mem, storage availability ratios, image bits];
// task block: [service one-hot, data ratio, x, y]; request block: the
// node x image request distribution normalized to sum <= 1.
qnet::EncodedState encode_state(const std::vector<NodeState>& nodes,
                                const Task& task, const EncodeContext& ctx,
                                std::span<const double> request_counts);

// Sliding count of recent requests per (scheduled node, requested image).
class RequestWindow {
 public:
  RequestWindow(int num_nodes, int num_images, int window_slots);
  void record(std::int64_t slot, NodeId node, ImageId image);
  void trim(std::int64_t current_slot);
  const std::vector<double>& counts() const { return counts_; }

 private:
  struct Entry {
    std::int64_t slot;
    NodeId node;
    ImageId image;
  };
  int num_images_;
  int window_slots_;
  std::vector<Entry> entries_;
  std::size_t begin_ = 0;
  std::vector<double> counts_;
};

// ---- action selection ----

struct SchedulingChoice {
  NodeId node = 0;
  std::vector<NodeId> unscheduled_better;  // nodes with strictly larger Q
  bool masked_greedy = false;              // picked by masked argmax
  double eps_draw = 0.0;
};

// With prob 1-eps: argmax over nodes whose mask bit is set (lowest id on
// ties); all-zero mask falls back to a uniform random node. With prob eps:
// uniform random node. unscheduled_better always compares the full Q
// vector against the chosen node.
SchedulingChoice select_scheduling_action(std::span<const double> q,
                                          std::span<const std::uint8_t> mask,
                                          double epsilon,
                                          std::mt19937_64& rng);

struct CachingChoice {
  ImageId image = 0;
  NodeId node = 0;
  int flat = 0;  // n * num_images + m
};

CachingChoice select_caching_action(std::span<const double> q, int num_nodes,
                                    int num_images, double epsilon,
                                    std::mt19937_64& rng);

// ---- rewards ----

inline double scheduling_reward(const DelayRecord& d) { return -d.total_s; }

// One row of ones per decision: the chosen node plus every better-Q node
// that only lost to the mask, in the requested image's column.
struct PopularityEntry {
  std::int64_t slot = 0;
  ImageId image = 0;
  std::vector<NodeId> nodes;
};

PopularityEntry build_popularity_entry(std::int64_t slot, NodeId chosen,
                                       const std::vector<NodeId>& better,
                                       ImageId image);

// Sum of popularity hits for (image, node) over slots
// [action_slot, action_slot + window].
double caching_reward(const std::vector<PopularityEntry>& log, ImageId image,
                      NodeId node, std::int64_t action_slot,
                      std::int64_t window);

// ---- episode loops ----

struct EpisodeMetrics {
  std::int64_t tasks = 0;
  std::int64_t failures = 0;
  std::int64_t caching_executions = 0;
  double sum_comm_s = 0.0;
  double sum_wait_s = 0.0;
  double sum_comp_s = 0.0;
  double sum_total_s = 0.0;

  double mean_comm_s() const { return tasks ? sum_comm_s / double(tasks) : 0; }
  double mean_wait_s() const { return tasks ? sum_wait_s / double(tasks) : 0; }
  double mean_comp_s() const { return tasks ? sum_comp_s / double(tasks) : 0; }
  double mean_total_s() const {
    return tasks ? sum_total_s / double(tasks) : 0;
  }
};

struct TraceRow {
  std::int64_t slot = 0;
  TaskId task_id = 0;
  NodeId action_node = 0;
  bool masked = false;
  double eps_draw = 0.0;
  double reward = 0.0;
};

// Joint scheduler/cacher. The network, replay memories, and reward-event
// counter persist across episodes of one run.
class TsicAgent {
 public:
  TsicAgent(const sim::SimConfig& sim_cfg, qnet::TrainConfig train_cfg,
            AgentConfig agent_cfg, std::uint64_t seed);

  // Drives the simulator until its event stream is exhausted. learn=false
  // evaluates only: no replay pushes, no training, no target syncs.
  EpisodeMetrics run_episode(sim::Simulator& sim, bool learn, double epsilon,
                             std::vector<TraceRow>* trace = nullptr);

  qnet::QNetwork& network() { return net_; }
  const qnet::QNetwork& network() const { return net_; }
  const qnet::ReplayMemory& scheduling_memory() const { return sched_mem_; }
  const qnet::ReplayMemory& caching_memory() const { return cache_mem_; }
  std::int64_t reward_events() const { return reward_events_; }

 private:
  struct SchedStash {
    qnet::EncodedState state;
    int action = 0;
  };
  struct CacheStash {
    qnet::EncodedState state;
    int action = 0;
    ImageId image = 0;
    NodeId node = 0;
    std::int64_t slot = 0;
  };

  qnet::TrainConfig train_cfg_;
  AgentConfig agent_cfg_;
  EncodeContext ctx_;
  qnet::QNetwork net_;
  qnet::ReplayMemory sched_mem_;
  qnet::ReplayMemory cache_mem_;
  std::mt19937_64 rng_;
  std::int64_t reward_events_ = 0;
};

qnet::NetworkDims dims_for(const sim::SimConfig& cfg, int hidden);

// ---- baselines ----

enum class BaselinePolicy { greedy_cpu, round_robin };

// Most available CPU wins; ties go to the lowest node id.
NodeId greedy_cpu_choice(const std::vector<NodeState>& nodes);

class RoundRobinCounter {
 public:
  NodeId next(int num_nodes);

 private:
  std::int64_t counter_ = 0;
};

EpisodeMetrics run_baseline_episode(sim::Simulator& sim,
                                    BaselinePolicy policy,
                                    std::vector<TraceRow>* trace = nullptr);

}  // namespace tsic::agent
