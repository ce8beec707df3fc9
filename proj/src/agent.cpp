#include "tsic/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsic::agent {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 11);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

qnet::EncodedState encode_state(const std::vector<NodeState>& nodes,
                                const Task& task, const EncodeContext& ctx,
                                std::span<const double> request_counts) {
  qnet::EncodedState s;
  const std::size_t num_images =
      nodes.empty() ? 0 : nodes.front().cached_images().size();
  s.node_block.reserve(nodes.size() * (3 + num_images));
  for (const NodeState& n : nodes) {
    s.node_block.push_back(clamp01(n.cpu_available() / n.cpu_capacity()));
    s.node_block.push_back(
        clamp01(n.mem_available_mb() / n.mem_capacity_mb()));
    s.node_block.push_back(
        clamp01(n.storage_available_mb() / n.storage_capacity_mb()));
    for (std::uint8_t bit : n.cached_images())
      s.node_block.push_back(double(bit));
  }

  s.task_block.assign(std::size_t(ctx.num_services), 0.0);
  if (task.service_id < 0 || task.service_id >= ctx.num_services)
    throw std::invalid_argument("task service outside encode context");
  s.task_block[std::size_t(task.service_id)] = 1.0;
  s.task_block.push_back(
      clamp01(task.data_size_mb / std::max(1e-9, ctx.max_task_data_mb)));
  s.task_block.push_back(task.location.x);
  s.task_block.push_back(task.location.y);

  s.request_block.assign(request_counts.begin(), request_counts.end());
  double sum = 0.0;
  for (double c : s.request_block) sum += c;
  if (sum > 0)
    for (double& c : s.request_block) c /= sum;
  return s;
}

RequestWindow::RequestWindow(int num_nodes, int num_images, int window_slots)
    : num_images_(num_images),
      window_slots_(window_slots),
      counts_(std::size_t(num_nodes) * std::size_t(num_images), 0.0) {
  if (window_slots <= 0)
    throw std::invalid_argument("request window must span >= 1 slot");
}

void RequestWindow::record(std::int64_t slot, NodeId node, ImageId image) {
  entries_.push_back(Entry{slot, node, image});
  counts_[std::size_t(node) * std::size_t(num_images_) + std::size_t(image)] +=
      1.0;
}

void RequestWindow::trim(std::int64_t current_slot) {
  while (begin_ < entries_.size() &&
         entries_[begin_].slot <= current_slot - window_slots_) {
    const Entry& e = entries_[begin_];
    counts_[std::size_t(e.node) * std::size_t(num_images_) +
            std::size_t(e.image)] -= 1.0;
    ++begin_;
  }
  if (begin_ > 4096 && begin_ * 2 > entries_.size()) {
    entries_.erase(entries_.begin(),
                   entries_.begin() + std::ptrdiff_t(begin_));
    begin_ = 0;
  }
}

SchedulingChoice select_scheduling_action(std::span<const double> q,
                                          std::span<const std::uint8_t> mask,
                                          double epsilon,
                                          std::mt19937_64& rng) {
  if (q.empty()) throw std::invalid_argument("no nodes to schedule on");
  if (mask.size() != q.size())
    throw std::invalid_argument("mask length must match Q vector");

  SchedulingChoice choice;
  choice.eps_draw = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const bool explore = choice.eps_draw < epsilon;

  bool any_masked = false;
  for (std::uint8_t m : mask) any_masked = any_masked || m != 0;

  if (!explore && any_masked) {
    int best = -1;
    for (std::size_t n = 0; n < q.size(); ++n) {
      if (!mask[n]) continue;
      if (best < 0 || q[n] > q[std::size_t(best)]) best = int(n);
    }
    choice.node = best;
    choice.masked_greedy = true;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, q.size() - 1);
    choice.node = NodeId(pick(rng));
  }

  for (std::size_t n = 0; n < q.size(); ++n)
    if (q[n] > q[std::size_t(choice.node)])
      choice.unscheduled_better.push_back(NodeId(n));
  return choice;
}

CachingChoice select_caching_action(std::span<const double> q, int num_nodes,
                                    int num_images, double epsilon,
                                    std::mt19937_64& rng) {
  if (q.size() != std::size_t(num_nodes) * std::size_t(num_images))
    throw std::invalid_argument("caching Q vector has wrong length");
  double draw = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  std::size_t flat;
  if (draw < epsilon) {
    flat = std::uniform_int_distribution<std::size_t>(0, q.size() - 1)(rng);
  } else {
    flat = 0;
    for (std::size_t i = 1; i < q.size(); ++i)
      if (q[i] > q[flat]) flat = i;  // lowest flat index wins ties
  }
  CachingChoice c;
  c.flat = int(flat);
  c.node = NodeId(flat / std::size_t(num_images));
  c.image = ImageId(flat % std::size_t(num_images));
  return c;
}

PopularityEntry build_popularity_entry(std::int64_t slot, NodeId chosen,
                                       const std::vector<NodeId>& better,
                                       ImageId image) {
  PopularityEntry e;
  e.slot = slot;
  e.image = image;
  e.nodes = better;
  if (std::find(e.nodes.begin(), e.nodes.end(), chosen) == e.nodes.end())
    e.nodes.push_back(chosen);
  return e;
}

double caching_reward(const std::vector<PopularityEntry>& log, ImageId image,
                      NodeId node, std::int64_t action_slot,
                      std::int64_t window) {
  double total = 0.0;
  for (const PopularityEntry& e : log) {
    if (e.slot < action_slot || e.slot > action_slot + window) continue;
    if (e.image != image) continue;
    if (std::find(e.nodes.begin(), e.nodes.end(), node) != e.nodes.end())
      total += 1.0;
  }
  return total;
}

qnet::NetworkDims dims_for(const sim::SimConfig& cfg, int hidden) {
  qnet::NetworkDims d;
  d.node_in = cfg.num_nodes * (3 + cfg.num_images);
  d.task_in = cfg.num_services + 3;
  d.request_in = cfg.num_nodes * cfg.num_images;
  d.hidden = hidden;
  d.num_nodes = cfg.num_nodes;
  d.num_images = cfg.num_images;
  return d;
}

TsicAgent::TsicAgent(const sim::SimConfig& sim_cfg,
                     qnet::TrainConfig train_cfg, AgentConfig agent_cfg,
                     std::uint64_t seed)
    : train_cfg_(train_cfg),
      agent_cfg_(agent_cfg),
      ctx_{sim_cfg.num_services, sim_cfg.task_data_mb.max},
      net_(dims_for(sim_cfg, train_cfg.hidden_width), mix_seed(seed, 0)),
      sched_mem_(std::size_t(train_cfg.replay_capacity)),
      cache_mem_(std::size_t(train_cfg.replay_capacity)),
      rng_(mix_seed(seed, 1)) {}

EpisodeMetrics TsicAgent::run_episode(sim::Simulator& sim, bool learn,
                                      double epsilon,
                                      std::vector<TraceRow>* trace) {
  const auto& cfg = sim.config();
  const int window = agent_cfg_.caching_update_slots;
  RequestWindow requests(cfg.num_nodes, cfg.num_images, window);
  std::vector<PopularityEntry> popularity_log;
  std::unordered_map<TaskId, SchedStash> sched_tmp;
  std::unordered_map<TaskId, CacheStash> cache_tmp;
  std::unordered_map<TaskId, std::size_t> trace_index;
  std::optional<CachingChoice> pending_caching;
  const TaskId final_task =
      sim.workload().empty() ? -1 : sim.workload().back().id;

  EpisodeMetrics metrics;
  std::int64_t last_slot = -1;

  while (auto ev = sim.next_event()) {
    // Execute the latest caching action at every CachingUpdate boundary
    // crossed since the previous event; each action runs at most once.
    std::int64_t from = std::max<std::int64_t>(last_slot + 1, 0);
    std::int64_t first = ((from + window - 1) / window) * window;
    for (std::int64_t t = first; t <= ev->slot; t += window) {
      if (pending_caching) {
        sim.apply_caching(pending_caching->image, pending_caching->node);
        pending_caching.reset();
        metrics.caching_executions += 1;
      }
    }
    last_slot = ev->slot;

    if (ev->kind == sim::EventKind::request) {
      const Task& task = sim.task(ev->task_id);
      requests.trim(ev->slot);
      qnet::EncodedState state =
          encode_state(sim.nodes(), task, ctx_, requests.counts());

      auto q_sched =
          net_.forward(state, qnet::Head::scheduling, qnet::WeightSet::policy);
      const ImageId image = sim.image_of_task(task);
      std::vector<std::uint8_t> mask(sim.nodes().size(), 0);
      for (std::size_t n = 0; n < sim.nodes().size(); ++n)
        mask[n] = sim.nodes()[n].has_image(image) ? 1 : 0;
      SchedulingChoice sched =
          select_scheduling_action(q_sched, mask, epsilon, rng_);

      auto q_cache =
          net_.forward(state, qnet::Head::caching, qnet::WeightSet::policy);
      CachingChoice caching = select_caching_action(
          q_cache, cfg.num_nodes, cfg.num_images, epsilon, rng_);

      popularity_log.push_back(build_popularity_entry(
          ev->slot, sched.node, sched.unscheduled_better, image));
      requests.record(ev->slot, sched.node, image);

      sched_tmp[task.id] = SchedStash{state, sched.node};
      cache_tmp[task.id] = CacheStash{std::move(state), caching.flat,
                                      caching.image, caching.node, ev->slot};
      pending_caching = caching;

      if (trace) {
        trace_index[task.id] = trace->size();
        trace->push_back(TraceRow{ev->slot, task.id, sched.node,
                                  sched.masked_greedy, sched.eps_draw, 0.0});
      }
      sim.step(sched.node, task);
    } else {
      auto s_it = sched_tmp.find(ev->task_id);
      auto c_it = cache_tmp.find(ev->task_id);
      if (s_it == sched_tmp.end() || c_it == cache_tmp.end())
        throw std::logic_error("reward event without stashed decision");

      const double r_sched = scheduling_reward(ev->delay);
      metrics.tasks += 1;
      metrics.sum_comm_s += ev->delay.comm_s;
      metrics.sum_wait_s += ev->delay.wait_s;
      metrics.sum_comp_s += ev->delay.comp_s;
      metrics.sum_total_s += ev->delay.total_s;
      if (ev->outcome != sim::TaskOutcome::completed) metrics.failures += 1;

      if (learn) {
        const Task& task = sim.task(ev->task_id);
        requests.trim(ev->slot);
        qnet::EncodedState next =
            encode_state(sim.nodes(), task, ctx_, requests.counts());
        const bool terminal = ev->task_id == final_task;

        const CacheStash& cs = c_it->second;
        double r_cache = caching_reward(popularity_log, cs.image, cs.node,
                                        cs.slot, window);

        sched_mem_.push(qnet::Transition{std::move(s_it->second.state),
                                         s_it->second.action, r_sched, next,
                                         terminal});
        cache_mem_.push(qnet::Transition{std::move(c_it->second.state),
                                         cs.action, r_cache, std::move(next),
                                         terminal});
        net_.train_step(sched_mem_, cache_mem_, train_cfg_, rng_);
        ++reward_events_;
        if (reward_events_ % train_cfg_.target_sync_period == 0)
          net_.sync_target();
      }

      if (trace) {
        auto it = trace_index.find(ev->task_id);
        if (it != trace_index.end()) (*trace)[it->second].reward = r_sched;
      }
      sched_tmp.erase(s_it);
      cache_tmp.erase(c_it);
    }
  }
  return metrics;
}

NodeId greedy_cpu_choice(const std::vector<NodeState>& nodes) {
  if (nodes.empty()) throw std::invalid_argument("empty cluster");
  NodeId best = 0;
  for (std::size_t n = 1; n < nodes.size(); ++n)
    if (nodes[n].cpu_available() > nodes[std::size_t(best)].cpu_available())
      best = NodeId(n);
  return best;
}

NodeId RoundRobinCounter::next(int num_nodes) {
  if (num_nodes <= 0) throw std::invalid_argument("empty cluster");
  return NodeId(counter_++ % num_nodes);
}

EpisodeMetrics run_baseline_episode(sim::Simulator& sim,
                                    BaselinePolicy policy,
                                    std::vector<TraceRow>* trace) {
  RoundRobinCounter rr;
  std::unordered_map<TaskId, std::size_t> trace_index;
  EpisodeMetrics metrics;
  while (auto ev = sim.next_event()) {
    if (ev->kind == sim::EventKind::request) {
      const Task& task = sim.task(ev->task_id);
      NodeId node = policy == BaselinePolicy::greedy_cpu
                        ? greedy_cpu_choice(sim.nodes())
                        : rr.next(sim.config().num_nodes);
      if (trace) {
        trace_index[task.id] = trace->size();
        trace->push_back(TraceRow{ev->slot, task.id, node, false, 0.0, 0.0});
      }
      sim.step(node, task);
    } else {
      metrics.tasks += 1;
      metrics.sum_comm_s += ev->delay.comm_s;
      metrics.sum_wait_s += ev->delay.wait_s;
      metrics.sum_comp_s += ev->delay.comp_s;
      metrics.sum_total_s += ev->delay.total_s;
      if (ev->outcome != sim::TaskOutcome::completed) metrics.failures += 1;
      if (trace) {
        auto it = trace_index.find(ev->task_id);
        if (it != trace_index.end())
          (*trace)[it->second].reward = scheduling_reward(ev->delay);
      }
    }
  }
  return metrics;
}

}  // namespace tsic::agent
