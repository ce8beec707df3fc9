#include "tsic/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace tsic::harness {

using nlohmann::json;

std::string policy_name(Policy p) {
  switch (p) {
    case Policy::TSIC: return "TSIC";
    case Policy::GRD: return "GRD";
    case Policy::RR: return "RR";
  }
  return "?";
}

std::optional<Policy> policy_from_name(const std::string& name) {
  if (name == "TSIC") return Policy::TSIC;
  if (name == "GRD") return Policy::GRD;
  if (name == "RR") return Policy::RR;
  return std::nullopt;
}

std::string axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::none: return "none";
    case SweepAxis::lfu_size: return "lfu_size";
    case SweepAxis::node_count: return "node_count";
    case SweepAxis::task_count: return "task_count";
  }
  return "?";
}

std::optional<SweepAxis> axis_from_name(const std::string& name) {
  if (name == "none") return SweepAxis::none;
  if (name == "lfu_size") return SweepAxis::lfu_size;
  if (name == "node_count") return SweepAxis::node_count;
  if (name == "task_count") return SweepAxis::task_count;
  return std::nullopt;
}

void ExperimentConfig::validate() const {
  sim.validate();
  if (policies.empty() || caches.empty())
    throw std::invalid_argument("need at least one policy and one cache");
  if (seeds.empty()) throw std::invalid_argument("need at least one seed");
  if (sweep_values.empty())
    throw std::invalid_argument("need at least one sweep value");
  for (std::size_t i = 1; i < sweep_values.size(); ++i)
    if (sweep_values[i] <= sweep_values[i - 1])
      throw std::invalid_argument("sweep values must be strictly increasing");
  if (sweep_axis == SweepAxis::none && sweep_values.size() != 1)
    throw std::invalid_argument("axis 'none' takes exactly one sweep value");
  if (lfu_fixed_size < 1)
    throw std::invalid_argument("lfu_fixed_size must be >= 1");
  if (train.learning_rate <= 0 || train.discount <= 0 || train.discount > 1)
    throw std::invalid_argument("bad learning rate or discount");
  if (train.batch_size < 1 || train.replay_capacity < train.batch_size)
    throw std::invalid_argument("bad batch size / replay capacity");
  if (train.target_sync_period < 1)
    throw std::invalid_argument("target_sync_period must be >= 1");
  if (agent.caching_update_slots < 1 || agent.train_episodes < 0)
    throw std::invalid_argument("bad agent config");
  if (agent.epsilon_train < 0 || agent.epsilon_train > 1 ||
      agent.epsilon_eval < 0 || agent.epsilon_eval > 1)
    throw std::invalid_argument("epsilon outside [0,1]");
}

// ---- JSON ----

namespace {

json range_to_json(const sim::Range& r) {
  return json{{"min", r.min}, {"max", r.max}};
}

sim::Range range_from_json(const json& j, sim::Range dflt) {
  if (j.is_null()) return dflt;
  return sim::Range{j.value("min", dflt.min), j.value("max", dflt.max)};
}

json sim_to_json(const sim::SimConfig& c) {
  return json{
      {"num_nodes", c.num_nodes},
      {"num_services", c.num_services},
      {"num_images", c.num_images},
      {"num_tasks", c.num_tasks},
      {"slot_duration_s", c.slot_duration_s},
      {"base_latency_s", c.base_latency_s},
      {"distance_bandwidth_factor", c.distance_bandwidth_factor},
      {"arrival_rate_per_slot", c.arrival_rate_per_slot},
      {"cpu_capacity", range_to_json(c.cpu_capacity)},
      {"mem_capacity_mb", range_to_json(c.mem_capacity_mb)},
      {"storage_tiers_mb", c.storage_tiers_mb},
      {"bandwidth_capacity_mbps", range_to_json(c.bandwidth_capacity_mbps)},
      {"cloud_bandwidth_mbps", range_to_json(c.cloud_bandwidth_mbps)},
      {"initial_images_per_node", c.initial_images_per_node},
      {"task_data_mb", range_to_json(c.task_data_mb)},
      {"task_cpu", range_to_json(c.task_cpu)},
      {"task_mem_mb", range_to_json(c.task_mem_mb)},
      {"task_bandwidth_mbps", range_to_json(c.task_bandwidth_mbps)},
      {"image_size_mb", range_to_json(c.image_size_mb)},
      {"service_start_s", range_to_json(c.service_start_s)},
      {"service_work_units", range_to_json(c.service_work_units)},
      {"popularity_weights", c.popularity_weights},
      {"penalty_multiplier", c.penalty_multiplier},
      {"initial_penalty_s", c.initial_penalty_s},
      {"rng_seed", c.rng_seed},
  };
}

sim::SimConfig sim_from_json(const json& j) {
  sim::SimConfig c;
  c.num_nodes = j.value("num_nodes", c.num_nodes);
  c.num_services = j.value("num_services", c.num_services);
  c.num_images = j.value("num_images", c.num_images);
  c.num_tasks = j.value("num_tasks", c.num_tasks);
  c.slot_duration_s = j.value("slot_duration_s", c.slot_duration_s);
  c.base_latency_s = j.value("base_latency_s", c.base_latency_s);
  c.distance_bandwidth_factor =
      j.value("distance_bandwidth_factor", c.distance_bandwidth_factor);
  c.arrival_rate_per_slot =
      j.value("arrival_rate_per_slot", c.arrival_rate_per_slot);
  c.cpu_capacity = range_from_json(j.value("cpu_capacity", json()),
                                   c.cpu_capacity);
  c.mem_capacity_mb =
      range_from_json(j.value("mem_capacity_mb", json()), c.mem_capacity_mb);
  c.storage_tiers_mb = j.value("storage_tiers_mb", c.storage_tiers_mb);
  c.bandwidth_capacity_mbps = range_from_json(
      j.value("bandwidth_capacity_mbps", json()), c.bandwidth_capacity_mbps);
  c.cloud_bandwidth_mbps = range_from_json(
      j.value("cloud_bandwidth_mbps", json()), c.cloud_bandwidth_mbps);
  c.initial_images_per_node =
      j.value("initial_images_per_node", c.initial_images_per_node);
  c.task_data_mb = range_from_json(j.value("task_data_mb", json()),
                                   c.task_data_mb);
  c.task_cpu = range_from_json(j.value("task_cpu", json()), c.task_cpu);
  c.task_mem_mb =
      range_from_json(j.value("task_mem_mb", json()), c.task_mem_mb);
  c.task_bandwidth_mbps = range_from_json(
      j.value("task_bandwidth_mbps", json()), c.task_bandwidth_mbps);
  c.image_size_mb =
      range_from_json(j.value("image_size_mb", json()), c.image_size_mb);
  c.service_start_s =
      range_from_json(j.value("service_start_s", json()), c.service_start_s);
  c.service_work_units = range_from_json(
      j.value("service_work_units", json()), c.service_work_units);
  c.popularity_weights = j.value("popularity_weights", c.popularity_weights);
  c.penalty_multiplier = j.value("penalty_multiplier", c.penalty_multiplier);
  c.initial_penalty_s = j.value("initial_penalty_s", c.initial_penalty_s);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  return c;
}

json train_to_json(const qnet::TrainConfig& t) {
  return json{{"learning_rate", t.learning_rate},
              {"discount", t.discount},
              {"batch_size", t.batch_size},
              {"replay_capacity", t.replay_capacity},
              {"target_sync_period", t.target_sync_period},
              {"hidden_width", t.hidden_width},
              {"max_grad_norm", t.max_grad_norm}};
}

qnet::TrainConfig train_from_json(const json& j) {
  qnet::TrainConfig t;
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.discount = j.value("discount", t.discount);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.replay_capacity = j.value("replay_capacity", t.replay_capacity);
  t.target_sync_period = j.value("target_sync_period", t.target_sync_period);
  t.hidden_width = j.value("hidden_width", t.hidden_width);
  t.max_grad_norm = j.value("max_grad_norm", t.max_grad_norm);
  return t;
}

json agent_to_json(const agent::AgentConfig& a) {
  return json{{"epsilon_train", a.epsilon_train},
              {"epsilon_eval", a.epsilon_eval},
              {"caching_update_slots", a.caching_update_slots},
              {"train_episodes", a.train_episodes}};
}

agent::AgentConfig agent_from_json(const json& j) {
  agent::AgentConfig a;
  a.epsilon_train = j.value("epsilon_train", a.epsilon_train);
  a.epsilon_eval = j.value("epsilon_eval", a.epsilon_eval);
  a.caching_update_slots =
      j.value("caching_update_slots", a.caching_update_slots);
  a.train_episodes = j.value("train_episodes", a.train_episodes);
  return a;
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig cfg;
  if (j.contains("sim")) cfg.sim = sim_from_json(j["sim"]);
  if (j.contains("train")) cfg.train = train_from_json(j["train"]);
  if (j.contains("agent")) cfg.agent = agent_from_json(j["agent"]);
  if (j.contains("policies")) {
    cfg.policies.clear();
    for (const auto& p : j["policies"]) {
      auto pol = policy_from_name(p.get<std::string>());
      if (!pol) throw std::invalid_argument("unknown policy in config");
      cfg.policies.push_back(*pol);
    }
  }
  if (j.contains("caches")) {
    cfg.caches.clear();
    for (const auto& c : j["caches"]) {
      auto var = cache::variant_from_name(c.get<std::string>());
      if (!var) throw std::invalid_argument("unknown cache in config");
      cfg.caches.push_back(*var);
    }
  }
  cfg.lfu_fixed_size = j.value("lfu_fixed_size", cfg.lfu_fixed_size);
  if (j.contains("sweep")) {
    auto axis = axis_from_name(j["sweep"].value("axis", std::string("none")));
    if (!axis) throw std::invalid_argument("unknown sweep axis");
    cfg.sweep_axis = *axis;
    cfg.sweep_values =
        j["sweep"].value("values", std::vector<std::int64_t>{0});
  }
  cfg.seeds = j.value("seeds", cfg.seeds);
  cfg.jobs = j.value("jobs", cfg.jobs);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  json j;
  j["sim"] = sim_to_json(cfg.sim);
  j["train"] = train_to_json(cfg.train);
  j["agent"] = agent_to_json(cfg.agent);
  j["policies"] = json::array();
  for (Policy p : cfg.policies) j["policies"].push_back(policy_name(p));
  j["caches"] = json::array();
  for (cache::Variant v : cfg.caches)
    j["caches"].push_back(cache::variant_name(v));
  j["lfu_fixed_size"] = cfg.lfu_fixed_size;
  j["sweep"] = json{{"axis", axis_name(cfg.sweep_axis)},
                    {"values", cfg.sweep_values}};
  j["seeds"] = cfg.seeds;
  j["jobs"] = cfg.jobs;
  return j.dump(2) + "\n";
}

void save_config(const ExperimentConfig& cfg,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config: " + path.string());
  out << config_to_json_text(cfg);
}

// ---- experiment execution ----

namespace {

struct RunSpec {
  std::int64_t sweep_value = 0;
  Policy policy = Policy::TSIC;
  cache::Variant cache = cache::Variant::SizeWeighted;
  std::uint64_t seed = 0;
};

sim::SimConfig resolve_sim(const ExperimentConfig& cfg,
                           std::int64_t sweep_value, std::uint64_t seed) {
  sim::SimConfig sc = cfg.sim;
  if (cfg.sweep_axis == SweepAxis::node_count) sc.num_nodes = int(sweep_value);
  if (cfg.sweep_axis == SweepAxis::task_count) sc.num_tasks = sweep_value;
  sc.rng_seed = seed;
  return sc;
}

std::size_t resolve_fixed_slots(const ExperimentConfig& cfg,
                                std::int64_t sweep_value) {
  if (cfg.sweep_axis == SweepAxis::lfu_size)
    return std::size_t(sweep_value);
  return std::size_t(cfg.lfu_fixed_size);
}

MetricsRow run_one(const ExperimentConfig& cfg, const RunSpec& spec,
                   const RunOptions& opts, bool is_first_cell) {
  sim::SimConfig sc = resolve_sim(cfg, spec.sweep_value, spec.seed);
  std::size_t fixed_slots = resolve_fixed_slots(cfg, spec.sweep_value);

  std::vector<agent::TraceRow>* trace =
      is_first_cell ? opts.first_cell_trace : nullptr;
  agent::EpisodeMetrics m;

  if (spec.policy == Policy::TSIC) {
    agent::TsicAgent ag(sc, cfg.train, cfg.agent, spec.seed);
    if (opts.load_policy)
      ag.network() = qnet::QNetwork::load(*opts.load_policy);
    for (int e = 0; e < cfg.agent.train_episodes; ++e) {
      sim::Simulator s(sc, spec.cache, fixed_slots);
      ag.run_episode(s, true, cfg.agent.epsilon_train);
    }
    sim::Simulator s(sc, spec.cache, fixed_slots);
    m = ag.run_episode(s, false, cfg.agent.epsilon_eval, trace);
    if (is_first_cell && opts.save_policy)
      ag.network().save(*opts.save_policy);
  } else {
    sim::Simulator s(sc, spec.cache, fixed_slots);
    m = agent::run_baseline_episode(
        s,
        spec.policy == Policy::GRD ? agent::BaselinePolicy::greedy_cpu
                                   : agent::BaselinePolicy::round_robin,
        trace);
  }

  MetricsRow row;
  row.sweep_value = spec.sweep_value;
  row.policy = spec.policy;
  row.cache = spec.cache;
  row.seed = spec.seed;
  row.mean_comm_s = m.mean_comm_s();
  row.mean_wait_s = m.mean_wait_s();
  row.mean_comp_s = m.mean_comp_s();
  row.mean_total_s = m.mean_total_s();
  row.failures = m.failures;
  return row;
}

}  // namespace

std::vector<MetricsRow> run_experiment(const ExperimentConfig& cfg,
                                       const RunOptions& opts) {
  cfg.validate();
  std::vector<RunSpec> specs;
  for (std::int64_t v : cfg.sweep_values)
    for (Policy p : cfg.policies)
      for (cache::Variant c : cfg.caches)
        for (std::uint64_t s : cfg.seeds)
          specs.push_back(RunSpec{v, p, c, s});

  unsigned jobs = cfg.jobs > 0 ? unsigned(cfg.jobs)
                               : std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, unsigned(specs.size()));

  std::vector<MetricsRow> rows(specs.size());
  if (jobs <= 1 || opts.first_cell_trace || opts.save_policy) {
    // Trace/checkpoint capture pins the first cell; keep it simple and run
    // sequentially in that case.
    for (std::size_t i = 0; i < specs.size(); ++i)
      rows[i] = run_one(cfg, specs[i], opts, i == 0);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= specs.size()) return;
        rows[i] = run_one(cfg, specs[i], opts, i == 0);
      }
    };
    std::vector<std::future<void>> futs;
    for (unsigned t = 0; t < jobs; ++t)
      futs.push_back(std::async(std::launch::async, worker));
    for (auto& f : futs) f.get();
  }

  std::sort(rows.begin(), rows.end(), [](const MetricsRow& a,
                                         const MetricsRow& b) {
    auto key = [](const MetricsRow& r) {
      return std::tuple(r.sweep_value, policy_name(r.policy),
                        cache::variant_name(r.cache), r.seed);
    };
    return key(a) < key(b);
  });
  return rows;
}

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::string out =
      "sweep,policy,cache,seed,mean_comm_s,mean_wait_s,mean_comp_s,"
      "mean_total_s,failures\n";
  char buf[256];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%s,%s,%llu,%.6f,%.6f,%.6f,%.6f,%lld\n",
                  static_cast<long long>(r.sweep_value),
                  policy_name(r.policy).c_str(),
                  cache::variant_name(r.cache).c_str(),
                  static_cast<unsigned long long>(r.seed), r.mean_comm_s,
                  r.mean_wait_s, r.mean_comp_s, r.mean_total_s,
                  static_cast<long long>(r.failures));
    out += buf;
  }
  return out;
}

void save_metrics_csv(const std::vector<MetricsRow>& rows,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics: " + path.string());
  out << metrics_to_csv(rows);
}

std::string trace_to_csv(const std::vector<agent::TraceRow>& rows) {
  std::string out = "slot,task_id,action_node,masked,eps_draw,reward\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%d,%d,%.6f,%.6f\n",
                  static_cast<long long>(r.slot),
                  static_cast<long long>(r.task_id), r.action_node,
                  r.masked ? 1 : 0, r.eps_draw, r.reward);
    out += buf;
  }
  return out;
}

// ---- presets ----

ExperimentConfig preset_fig3() {
  ExperimentConfig cfg = preset_fig4();
  cfg.sim.num_nodes = 5;
  cfg.sim.num_services = 40;
  cfg.sim.num_images = 40;
  cfg.sim.num_tasks = 300;
  cfg.sim.arrival_rate_per_slot = 0.7;
  // Storage is squeezed on purpose: the smallest tier holds about ten of
  // the smallest images, far below the image catalog, so eviction
  // pressure stays high while popular images live long enough to build
  // up distinct frequencies.
  cfg.sim.storage_tiers_mb = {2560.0, 4096.0, 5120.0};
  cfg.sim.initial_images_per_node = 4;
  // congested (but stable) registry links make repeated big-image pulls
  // disproportionately expensive, which is what the size-weighted
  // priority is protecting against
  cfg.sim.cloud_bandwidth_mbps = {20.0, 40.0};
  cfg.policies = {Policy::TSIC};
  cfg.caches = {cache::Variant::SizeWeighted, cache::Variant::FrequencyOnly,
                cache::Variant::FixedSlots};
  cfg.sweep_axis = SweepAxis::lfu_size;
  cfg.sweep_values = {2, 4, 8};
  return cfg;
}

ExperimentConfig preset_fig4() {
  ExperimentConfig cfg;
  cfg.sim.num_nodes = 5;  // swept
  cfg.sim.num_services = 6;
  cfg.sim.num_images = 6;
  cfg.sim.num_tasks = 200;
  // compute and bandwidth absorb even fully concentrated placement (the
  // scheduler may herd onto image holders); storage stays tight so image
  // churn is what separates the policies
  cfg.sim.cpu_capacity = {24.0, 32.0};
  cfg.sim.mem_capacity_mb = {6144.0, 10240.0};
  cfg.sim.bandwidth_capacity_mbps = {180.0, 260.0};
  cfg.sim.cloud_bandwidth_mbps = {30.0, 60.0};
  cfg.sim.storage_tiers_mb = {768.0, 1152.0, 1536.0};
  cfg.sim.initial_images_per_node = 2;
  cfg.sim.task_cpu = {0.5, 1.5};
  cfg.sim.task_mem_mb = {32.0, 128.0};
  cfg.sim.task_bandwidth_mbps = {4.0, 10.0};
  cfg.sim.task_data_mb = {5.0, 40.0};
  cfg.sim.service_work_units = {2.0, 6.0};
  cfg.policies = {Policy::TSIC, Policy::GRD, Policy::RR};
  cfg.caches = {cache::Variant::SizeWeighted};
  cfg.sweep_axis = SweepAxis::node_count;
  cfg.sweep_values = {3, 4, 5, 6, 7, 8};
  return cfg;
}

ExperimentConfig preset_fig5() {
  ExperimentConfig cfg = preset_fig4();
  cfg.sim.num_nodes = 5;
  cfg.sweep_axis = SweepAxis::task_count;
  cfg.sweep_values = {50, 100, 200, 400};
  return cfg;
}

std::optional<ExperimentConfig> preset_by_name(const std::string& name) {
  if (name == "fig3") return preset_fig3();
  if (name == "fig4") return preset_fig4();
  if (name == "fig5") return preset_fig5();
  return std::nullopt;
}

}  // namespace tsic::harness
