#include "tsic/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tsic::sim {

namespace {

// splitmix64: distinct deterministic streams from one seed
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kStreamCatalog = 0;
constexpr std::uint64_t kStreamWorkload = 1;
constexpr std::uint64_t kStreamCluster = 2;

}  // namespace

double Range::sample(std::mt19937_64& rng) const {
  if (max < min) throw std::invalid_argument("range with max < min");
  if (max == min) return min;
  return std::uniform_real_distribution<double>(min, max)(rng);
}

void SimConfig::validate() const {
  if (num_nodes < 1 || num_services < 1 || num_images < 1 || num_tasks < 0)
    throw std::invalid_argument("counts must be >= 1 (tasks >= 0)");
  if (slot_duration_s <= 0)
    throw std::invalid_argument("slot_duration_s must be > 0");
  if (arrival_rate_per_slot <= 0)
    throw std::invalid_argument("arrival_rate_per_slot must be > 0");
  if (storage_tiers_mb.empty())
    throw std::invalid_argument("storage_tiers_mb must not be empty");
  if (!popularity_weights.empty() &&
      int(popularity_weights.size()) != num_services)
    throw std::invalid_argument("popularity weights must match num_services");
  if (distance_bandwidth_factor < 0 ||
      distance_bandwidth_factor * std::sqrt(2.0) >= 1.0)
    throw std::invalid_argument(
        "distance_bandwidth_factor must keep link bandwidth positive");
  if (penalty_multiplier <= 0 || initial_penalty_s <= 0)
    throw std::invalid_argument("penalty settings must be positive");
}

std::vector<double> SimConfig::resolved_popularity() const {
  std::vector<double> w = popularity_weights;
  if (w.empty()) {
    w.resize(std::size_t(num_services));
    for (int v = 0; v < num_services; ++v) w[std::size_t(v)] = 1.0 / (v + 1);
  }
  double sum = 0.0;
  for (double x : w) {
    if (x < 0) throw std::invalid_argument("negative popularity weight");
    sum += x;
  }
  if (sum <= 0) throw std::invalid_argument("popularity weights sum to zero");
  for (double& x : w) x /= sum;
  return w;
}

Catalog build_catalog(const SimConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(mix_seed(cfg.rng_seed, kStreamCatalog));
  Catalog cat;
  cat.images.reserve(std::size_t(cfg.num_images));
  for (int m = 0; m < cfg.num_images; ++m)
    cat.images.push_back(Image{m, cfg.image_size_mb.sample(rng)});
  cat.services.reserve(std::size_t(cfg.num_services));
  for (int v = 0; v < cfg.num_services; ++v) {
    Service svc;
    svc.id = v;
    svc.image_id = v % cfg.num_images;
    svc.start_time_s = cfg.service_start_s.sample(rng);
    svc.work_units = cfg.service_work_units.sample(rng);
    cat.services.push_back(svc);
  }
  return cat;
}

std::vector<Task> generate_workload(const SimConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(mix_seed(cfg.rng_seed, kStreamWorkload));
  auto weights = cfg.resolved_popularity();
  std::discrete_distribution<int> service_dist(weights.begin(), weights.end());
  std::exponential_distribution<double> gap(cfg.arrival_rate_per_slot);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Task> tasks;
  tasks.reserve(std::size_t(cfg.num_tasks));
  double clock = 0.0;
  for (std::int64_t i = 0; i < cfg.num_tasks; ++i) {
    clock += gap(rng);
    Task t;
    t.id = i;
    t.arrival_slot = std::int64_t(std::floor(clock));
    t.service_id = service_dist(rng);
    t.data_size_mb = cfg.task_data_mb.sample(rng);
    t.location = Point2{unit(rng), unit(rng)};
    t.cpu_demand = cfg.task_cpu.sample(rng);
    t.mem_demand_mb = cfg.task_mem_mb.sample(rng);
    t.bandwidth_demand_mbps = cfg.task_bandwidth_mbps.sample(rng);
    tasks.push_back(t);
  }
  return tasks;
}

void save_workload_csv(const std::filesystem::path& path,
                       const std::vector<Task>& tasks) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open workload file for writing");
  out << "task_id,arrival_slot,service_id,data_mb,cpu,mem,bw,x,y\n";
  char buf[256];
  for (const Task& t : tasks) {
    std::snprintf(buf, sizeof(buf),
                  "%lld,%lld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(t.id),
                  static_cast<long long>(t.arrival_slot), t.service_id,
                  t.data_size_mb, t.cpu_demand, t.mem_demand_mb,
                  t.bandwidth_demand_mbps, t.location.x, t.location.y);
    out << buf;
  }
}

std::vector<Task> load_workload_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open workload file for reading");
  std::string line;
  std::getline(in, line);  // header
  std::vector<Task> tasks;
  std::int64_t prev_slot = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Task t;
    long long id = 0, slot = 0;
    if (std::sscanf(line.c_str(), "%lld,%lld,%d,%lg,%lg,%lg,%lg,%lg,%lg", &id,
                    &slot, &t.service_id, &t.data_size_mb, &t.cpu_demand,
                    &t.mem_demand_mb, &t.bandwidth_demand_mbps, &t.location.x,
                    &t.location.y) != 9)
      throw std::runtime_error("malformed workload line: " + line);
    t.id = id;
    t.arrival_slot = slot;
    if (!tasks.empty() && t.arrival_slot < prev_slot)
      throw std::runtime_error("workload arrival slots must be non-decreasing");
    prev_slot = t.arrival_slot;
    tasks.push_back(t);
  }
  return tasks;
}

double communication_delay(const Task& task, const NodeState& node,
                           double base_latency_s, double distance_factor) {
  double link = std::min(task.bandwidth_demand_mbps,
                         node.bandwidth_available_mbps());
  double eff =
      link * (1.0 - distance_factor * distance(task.location, node.location()));
  if (eff <= 0.0)
    throw std::runtime_error("non-positive effective bandwidth (config bug)");
  return task.data_size_mb / eff + base_latency_s;
}

double computation_delay(const Task& task, const Service& service) {
  if (task.cpu_demand <= 0.0)
    throw std::runtime_error("task with zero allocated CPU");
  return service.work_units / task.cpu_demand;
}

bool Simulator::EventOrder::operator()(const SimEvent& a,
                                       const SimEvent& b) const {
  // priority_queue pops the "largest"; invert for min-first. Rewards come
  // before requests within a slot so releases precede admissions.
  auto rank = [](const SimEvent& e) {
    return std::tuple(e.slot, e.kind == EventKind::reward ? 0 : 1, e.task_id);
  };
  return rank(a) > rank(b);
}

Simulator::Simulator(SimConfig cfg, cache::Variant cache_variant,
                     std::size_t fixed_slots)
    : Simulator(std::move(cfg), cache_variant, fixed_slots,
                std::vector<Task>{}) {}

Simulator::Simulator(SimConfig cfg, cache::Variant cache_variant,
                     std::size_t fixed_slots, std::vector<Task> workload)
    : cfg_(std::move(cfg)),
      catalog_(build_catalog(cfg_)),
      workload_(std::move(workload)),
      cache_manager_(cache_variant, fixed_slots, catalog_.images,
                     std::size_t(cfg_.num_nodes)) {
  cfg_.validate();
  if (workload_.empty()) workload_ = generate_workload(cfg_);
  for (std::size_t i = 0; i < workload_.size(); ++i) {
    const Task& t = workload_[i];
    if (t.id != TaskId(i))
      throw std::invalid_argument("task ids must be dense and in order");
    if (t.service_id < 0 || t.service_id >= cfg_.num_services)
      throw std::invalid_argument("task requests unknown service");
  }
  init_cluster();
  seed_requests();
}

void Simulator::init_cluster() {
  std::mt19937_64 rng(mix_seed(cfg_.rng_seed, kStreamCluster));
  const int n = cfg_.num_nodes;
  const int cols = int(std::ceil(std::sqrt(double(n))));
  const int rows = (n + cols - 1) / cols;

  nodes_.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    Point2 loc{(i % cols + 0.5) / cols, (i / cols + 0.5) / rows};
    double storage =
        cfg_.storage_tiers_mb[std::size_t(i) % cfg_.storage_tiers_mb.size()];
    nodes_.emplace_back(i, loc, cfg_.cpu_capacity.sample(rng),
                        cfg_.mem_capacity_mb.sample(rng), storage,
                        cfg_.bandwidth_capacity_mbps.sample(rng),
                        cfg_.cloud_bandwidth_mbps.sample(rng),
                        std::size_t(cfg_.num_images));
  }
  pull_busy_until_s_.assign(std::size_t(n), 0.0);

  // Each node starts with a few random images, storage permitting.
  std::vector<ImageId> order(std::size_t(cfg_.num_images));
  for (int m = 0; m < cfg_.num_images; ++m) order[std::size_t(m)] = m;
  for (NodeState& node : nodes_) {
    for (std::size_t j = order.size(); j > 1; --j) {
      std::uniform_int_distribution<std::size_t> pick(0, j - 1);
      std::swap(order[j - 1], order[pick(rng)]);
    }
    int placed = 0;
    for (ImageId m : order) {
      if (placed >= cfg_.initial_images_per_node) break;
      const Image& img = catalog_.images[std::size_t(m)];
      if (img.size_mb <= node.storage_available_mb()) {
        cache_manager_.seed_image(node, m);
        ++placed;
      }
    }
  }
}

void Simulator::seed_requests() {
  for (const Task& t : workload_) {
    SimEvent ev;
    ev.kind = EventKind::request;
    ev.slot = t.arrival_slot;
    ev.task_id = t.id;
    events_.push(ev);
  }
}

const Task& Simulator::task(TaskId id) const {
  if (id < 0 || std::size_t(id) >= workload_.size())
    throw std::out_of_range("unknown task id");
  return workload_[std::size_t(id)];
}

ImageId Simulator::image_of_service(ServiceId v) const {
  if (v < 0 || std::size_t(v) >= catalog_.services.size())
    throw std::out_of_range("unknown service id");
  return catalog_.services[std::size_t(v)].image_id;
}

ImageId Simulator::image_of_task(const Task& t) const {
  return image_of_service(t.service_id);
}

NodeState& Simulator::node(NodeId n) {
  if (n < 0 || std::size_t(n) >= nodes_.size())
    throw std::out_of_range("unknown node id");
  return nodes_[std::size_t(n)];
}

std::optional<SimEvent> Simulator::next_event() {
  if (events_.empty()) return std::nullopt;
  SimEvent ev = events_.top();
  events_.pop();
  current_slot_ = ev.slot;
  if (ev.kind == EventKind::reward &&
      ev.outcome == TaskOutcome::completed) {
    nodes_[std::size_t(ev.node)].release_task(task(ev.task_id));
    resident_.erase(ev.task_id);
  }
  return ev;
}

double Simulator::penalty_delay_s() const {
  double base = worst_feasible_total_ > 0.0 ? worst_feasible_total_
                                            : cfg_.initial_penalty_s;
  return cfg_.penalty_multiplier * base;
}

SimEvent Simulator::make_completion(const Task& task, TaskOutcome outcome,
                                    const DelayRecord& delay, NodeId node) {
  SimEvent ev;
  ev.kind = EventKind::reward;
  ev.task_id = task.id;
  ev.delay = delay;
  ev.outcome = outcome;
  ev.node = node;
  auto slots = std::int64_t(std::ceil(delay.total_s / cfg_.slot_duration_s));
  ev.slot = task.arrival_slot + std::max<std::int64_t>(1, slots);
  return ev;
}

double Simulator::waiting_delay(const Task& task, NodeId node_id) {
  NodeState& nd = node(node_id);
  const Service& svc = catalog_.services[std::size_t(task.service_id)];
  const Image& img = catalog_.images[std::size_t(svc.image_id)];
  double pull_component = 0.0;
  if (!nd.has_image(img.id)) {
    double now_s = double(task.arrival_slot) * cfg_.slot_duration_s;
    double pull_time = img.size_mb / nd.cloud_bandwidth_mbps();
    // Pulls on one node serialize on the registry link.
    double start = std::max(now_s, pull_busy_until_s_[std::size_t(node_id)]);
    pull_busy_until_s_[std::size_t(node_id)] = start + pull_time;
    pull_component = (start - now_s) + pull_time;
    cache::EvictionResult er = cache_manager_.ensure_capacity(nd, img);
    if (!er.ok)
      throw std::runtime_error("waiting_delay on an uncacheable image");
  }
  cache_manager_.touch(node_id, img.id);
  return pull_component + svc.start_time_s;
}

StepResult Simulator::step(NodeId action, const Task& task) {
  NodeState& nd = node(action);  // throws on unknown node id
  const Service& svc = catalog_.services[std::size_t(task.service_id)];
  const Image& img = catalog_.images[std::size_t(svc.image_id)];
  const bool present = nd.has_image(img.id);

  StepResult result;
  bool feasible = check_bandwidth(nd, task) && check_compute(nd, task);
  bool storage_impossible = false;

  if (feasible) {
    // Evict per cache policy until the task data (and the image, if it
    // must be pulled) fit; never evict the image the task itself uses.
    double required =
        task.data_size_mb + (present ? 0.0 : img.size_mb);
    auto room = cache_manager_.make_room(
        nd, required,
        present ? std::optional<ImageId>(img.id) : std::nullopt);
    if (!room.ok) {
      feasible = false;
      storage_impossible =
          !present && img.size_mb > nd.usable_image_storage_mb();
    } else {
      result.evictions = std::move(room.evicted);
    }
  }

  if (!feasible) {
    result.outcome = storage_impossible ? TaskOutcome::uncacheable
                                        : TaskOutcome::rejected;
    result.delay = make_delay(0.0, penalty_delay_s(), 0.0);
    SimEvent ev = make_completion(task, result.outcome, result.delay, action);
    result.reward_slot = ev.slot;
    events_.push(ev);
    ++failures_;
    if (storage_impossible)
      ++uncacheable_;
    else
      ++rejected_;
    return result;
  }

  double comm = communication_delay(task, nd, cfg_.base_latency_s,
                                    cfg_.distance_bandwidth_factor);
  result.pulled = !present;
  double wait = waiting_delay(task, action);
  double comp = computation_delay(task, svc);
  result.delay = make_delay(comm, wait, comp);

  nd.admit_task(task);
  resident_[task.id] = action;
  worst_feasible_total_ = std::max(worst_feasible_total_, result.delay.total_s);

  SimEvent ev =
      make_completion(task, TaskOutcome::completed, result.delay, action);
  result.reward_slot = ev.slot;
  events_.push(ev);
  return result;
}

CachingOutcome Simulator::apply_caching(ImageId m, NodeId n) {
  NodeState& nd = node(n);
  if (m < 0 || std::size_t(m) >= catalog_.images.size())
    throw std::out_of_range("unknown image id");
  const Image& img = catalog_.images[std::size_t(m)];

  CachingOutcome out;
  if (nd.has_image(m)) {
    cache_manager_.touch(n, m);
    out.ok = true;
    return out;
  }
  cache::EvictionResult er = cache_manager_.ensure_capacity(nd, img);
  if (!er.ok) return out;  // uncacheable: action becomes a no-op
  cache_manager_.touch(n, m);

  // Background pull still occupies the node's registry link.
  double now_s = double(current_slot_) * cfg_.slot_duration_s;
  double start = std::max(now_s, pull_busy_until_s_[std::size_t(n)]);
  pull_busy_until_s_[std::size_t(n)] =
      start + img.size_mb / nd.cloud_bandwidth_mbps();

  out.ok = true;
  out.evicted = std::move(er.evicted);
  out.pulled = true;
  return out;
}

}  // namespace tsic::sim
