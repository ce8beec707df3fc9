#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <random>
#include <vector>

#include "doctest.h"
#include "tsic/agent.hpp"

using namespace tsic;
using namespace tsic::agent;

namespace {

sim::SimConfig small_world() {
  sim::SimConfig c;
  c.num_nodes = 3;
  c.num_services = 4;
  c.num_images = 4;
  c.num_tasks = 60;
  c.rng_seed = 3;
  return c;
}

qnet::TrainConfig quick_train() {
  qnet::TrainConfig t;
  t.batch_size = 8;
  t.hidden_width = 16;
  return t;
}

Task plain_task(TaskId id, std::int64_t arrival, int service = 0) {
  Task t;
  t.id = id;
  t.arrival_slot = arrival;
  t.service_id = service;
  t.data_size_mb = 20.0;
  t.cpu_demand = 1.0;
  t.mem_demand_mb = 64.0;
  t.bandwidth_demand_mbps = 5.0;
  t.location = Point2{0.5, 0.5};
  return t;
}

}  // namespace

TEST_CASE("encode_state layout and normalization endpoints") {
  std::vector<NodeState> nodes;
  nodes.emplace_back(0, Point2{0.25, 0.75}, 8.0, 100.0, 1000.0, 10.0, 30.0, 2);
  nodes.emplace_back(1, Point2{0.75, 0.75}, 4.0, 100.0, 1000.0, 10.0, 30.0, 2);

  Task t = plain_task(0, 0, 2);
  t.data_size_mb = 30.0;
  t.location = Point2{0.1, 0.9};

  EncodeContext ctx{4, 60.0};
  std::vector<double> counts(2 * 2, 0.0);
  auto s = encode_state(nodes, t, ctx, counts);

  CHECK(s.node_block.size() == 2 * (3 + 2));
  CHECK(s.task_block.size() == 4 + 3);
  CHECK(s.request_block.size() == 4);

  // untouched node: availability ratios are exactly 1
  CHECK(s.node_block[0] == 1.0);
  CHECK(s.node_block[1] == 1.0);
  CHECK(s.node_block[2] == 1.0);
  // one-hot service and scaled data size
  CHECK(s.task_block[2] == 1.0);
  CHECK(s.task_block[0] == 0.0);
  CHECK(s.task_block[4] == doctest::Approx(0.5));  // 30 / 60
  CHECK(s.task_block[5] == 0.1);
  CHECK(s.task_block[6] == 0.9);
  // empty window -> zero request block
  for (double v : s.request_block) CHECK(v == 0.0);

  SUBCASE("draining cpu drives its coordinate to zero") {
    Task full = plain_task(1, 0, 0);
    full.cpu_demand = 8.0;
    nodes[0].admit_task(full);
    auto drained = encode_state(nodes, t, ctx, counts);
    CHECK(drained.node_block[0] == 0.0);
  }

  SUBCASE("toggling an image bit flips exactly one coordinate") {
    auto before = encode_state(nodes, t, ctx, counts).node_block;
    nodes[1].cache_image(Image{1, 300.0});
    auto after = encode_state(nodes, t, ctx, counts).node_block;
    const std::size_t bit_idx = 5 + 3 + 1;      // node 1 block, image 1 bit
    const std::size_t storage_idx = 5 + 2;      // node 1 storage ratio
    for (std::size_t i = 0; i < before.size(); ++i) {
      if (i == bit_idx)
        CHECK(after[i] == before[i] + 1.0);
      else if (i != storage_idx)
        CHECK(after[i] == before[i]);
    }
  }
}

TEST_CASE("request window counts only the trailing slots") {
  RequestWindow w(2, 3, 10);
  w.record(0, 0, 1);
  w.record(5, 1, 2);
  w.trim(9);
  CHECK(w.counts()[0 * 3 + 1] == 1.0);
  CHECK(w.counts()[1 * 3 + 2] == 1.0);
  w.trim(10);  // slot 0 is now 10 slots old
  CHECK(w.counts()[0 * 3 + 1] == 0.0);
  CHECK(w.counts()[1 * 3 + 2] == 1.0);
  w.trim(15);
  CHECK(w.counts()[1 * 3 + 2] == 0.0);
}

TEST_CASE("masked argmax selection with the worked example") {
  std::mt19937_64 rng(1);
  std::vector<double> q{0.5, 0.9, 0.1};
  std::vector<std::uint8_t> mask{1, 0, 1};
  auto c = select_scheduling_action(q, mask, 0.0, rng);
  CHECK(c.node == 0);
  CHECK(c.masked_greedy);
  CHECK(c.unscheduled_better == std::vector<NodeId>{1});
}

TEST_CASE("all-zero mask falls back to a uniform random node") {
  std::mt19937_64 rng(7);
  std::vector<double> q{0.5, 0.9, 0.1};
  std::vector<std::uint8_t> mask{0, 0, 0};
  std::vector<int> hits(3, 0);
  for (int i = 0; i < 10000; ++i) {
    auto c = select_scheduling_action(q, mask, 0.0, rng);
    CHECK_FALSE(c.masked_greedy);
    hits[std::size_t(c.node)] += 1;
  }
  for (int h : hits) {
    CHECK(double(h) / 10000.0 >= 0.31);
    CHECK(double(h) / 10000.0 <= 0.35);
  }
}

TEST_CASE("epsilon one explores uniformly regardless of q") {
  std::mt19937_64 rng(9);
  std::vector<double> q{100.0, -5.0, 3.0};
  std::vector<std::uint8_t> mask{1, 1, 1};
  std::vector<int> hits(3, 0);
  for (int i = 0; i < 9000; ++i)
    hits[std::size_t(select_scheduling_action(q, mask, 1.0, rng).node)] += 1;
  for (int h : hits) CHECK(std::abs(h - 3000) < 300);
}

TEST_CASE("selection matches a brute-force oracle on random cases") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> qv(-1.0, 1.0);
  std::uniform_int_distribution<int> nn(1, 8);
  std::uniform_int_distribution<int> bit(0, 1);
  for (int iter = 0; iter < 2000; ++iter) {
    int n = nn(rng);
    std::vector<double> q(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n));
    for (auto& v : q) v = qv(rng);
    for (auto& m : mask) m = std::uint8_t(bit(rng));

    auto c = select_scheduling_action(q, mask, 0.0, rng);

    bool any = std::any_of(mask.begin(), mask.end(),
                           [](std::uint8_t m) { return m != 0; });
    if (any) {
      int best = -1;
      for (int i = 0; i < n; ++i)
        if (mask[std::size_t(i)] &&
            (best < 0 || q[std::size_t(i)] > q[std::size_t(best)]))
          best = i;
      CHECK(c.node == best);
    }
    std::vector<NodeId> better;
    for (int i = 0; i < n; ++i)
      if (q[std::size_t(i)] > q[std::size_t(c.node)]) better.push_back(i);
    CHECK(c.unscheduled_better == better);
  }
}

TEST_CASE("positive scaling never changes the greedy choice") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> qv(-1.0, 1.0);
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<double> q(5);
    for (auto& v : q) v = qv(rng);
    std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
    std::mt19937_64 r1{std::uint64_t(iter)}, r2{std::uint64_t(iter)};
    auto a = select_scheduling_action(q, mask, 0.0, r1);
    std::vector<double> scaled = q;
    for (auto& v : scaled) v *= 7.25;
    auto b = select_scheduling_action(scaled, mask, 0.0, r2);
    CHECK(a.node == b.node);
    CHECK(a.unscheduled_better == b.unscheduled_better);
  }
}

TEST_CASE("caching action selection and tie rule") {
  std::mt19937_64 rng(41);
  std::vector<double> q{0.0, 0.3, 0.9, 0.1, 0.2, 0.05};  // 3 nodes x 2 images
  auto c = select_caching_action(q, 3, 2, 0.0, rng);
  CHECK(c.flat == 2);
  CHECK(c.node == 1);
  CHECK(c.image == 0);

  std::vector<double> tie{0.5, 0.5, 0.1, 0.1};
  auto t = select_caching_action(tie, 2, 2, 0.0, rng);
  CHECK(t.flat == 0);

  std::vector<int> hits(4, 0);
  for (int i = 0; i < 8000; ++i)
    hits[std::size_t(select_caching_action(tie, 2, 2, 1.0, rng).flat)] += 1;
  for (int h : hits) CHECK(std::abs(h - 2000) < 250);
}

TEST_CASE("scheduling reward is the negated total delay") {
  CHECK(scheduling_reward(make_delay(1.0, 2.0, 1.2)) == -4.2);
  CHECK(scheduling_reward(make_delay(0, 0, 0)) == 0.0);
  CHECK(scheduling_reward(make_delay(1, 0, 0)) >
        scheduling_reward(make_delay(2, 0, 0)));
}

TEST_CASE("popularity entries mark chosen plus unscheduled-better nodes") {
  auto e = build_popularity_entry(7, 2, {1}, 3);
  CHECK(e.slot == 7);
  CHECK(e.image == 3);
  CHECK(e.nodes == std::vector<NodeId>{1, 2});

  auto solo = build_popularity_entry(7, 2, {}, 3);
  CHECK(solo.nodes == std::vector<NodeId>{2});

  // chosen already in the better set is not duplicated (row sums <= 1)
  auto dup = build_popularity_entry(7, 2, {1, 2}, 3);
  CHECK(dup.nodes == std::vector<NodeId>{1, 2});
}

TEST_CASE("caching reward sums the window hits") {
  std::vector<PopularityEntry> log{
      {10, 1, {0}},
      {12, 1, {0, 2}},
      {15, 1, {2}},
      {21, 1, {0}},  // outside [10, 20]
      {14, 0, {0}},  // other image
  };
  CHECK(caching_reward(log, 1, 0, 10, 10) == 2.0);
  CHECK(caching_reward(log, 1, 2, 10, 10) == 2.0);
  CHECK(caching_reward(log, 0, 1, 10, 10) == 0.0);

  // independent recount over the same log
  double manual = 0;
  for (const auto& e : log)
    if (e.slot >= 10 && e.slot <= 20 && e.image == 1)
      for (NodeId n : e.nodes)
        if (n == 0) manual += 1;
  CHECK(caching_reward(log, 1, 0, 10, 10) == manual);
}

TEST_CASE("greedy baseline picks the most available cpu, lowest id on ties") {
  std::vector<NodeState> nodes;
  nodes.emplace_back(0, Point2{0, 0}, 2.0, 100, 1000, 10, 30, 1);
  nodes.emplace_back(1, Point2{0, 0}, 7.0, 100, 1000, 10, 30, 1);
  nodes.emplace_back(2, Point2{0, 0}, 7.0, 100, 1000, 10, 30, 1);
  CHECK(greedy_cpu_choice(nodes) == 1);

  std::vector<NodeState> equal;
  for (int i = 0; i < 3; ++i)
    equal.emplace_back(i, Point2{0, 0}, 4.0, 100, 1000, 10, 30, 1);
  CHECK(greedy_cpu_choice(equal) == 0);
}

TEST_CASE("greedy ignores image placement and can trigger a pull") {
  sim::SimConfig c;
  c.num_nodes = 2;
  c.num_services = 1;
  c.num_images = 1;
  c.num_tasks = 1;
  c.initial_images_per_node = 0;
  c.cpu_capacity = {8.0, 8.0};
  std::vector<Task> wl{plain_task(0, 0)};
  sim::Simulator s(c, cache::Variant::SizeWeighted, 4, wl);

  // image only on node 0, but node 0 is busier
  s.cache().seed_image(s.node(0), 0);
  Task busy = plain_task(1, 0);
  busy.cpu_demand = 3.0;
  s.node(0).admit_task(busy);

  s.next_event();
  NodeId pick = greedy_cpu_choice(s.nodes());
  CHECK(pick == 1);  // more cpu, no image
  auto r = s.step(pick, wl[0]);
  CHECK(r.outcome == sim::TaskOutcome::completed);
  CHECK(r.pulled);
}

TEST_CASE("round robin cycles node ids") {
  RoundRobinCounter rr;
  std::vector<NodeId> seq;
  for (int i = 0; i < 7; ++i) seq.push_back(rr.next(3));
  CHECK(seq == std::vector<NodeId>{0, 1, 2, 0, 1, 2, 0});
}

TEST_CASE("tsic episode accounts one reward per task and stays deterministic") {
  sim::SimConfig c = small_world();
  qnet::TrainConfig t = quick_train();
  AgentConfig a;

  auto run_once = [&](std::vector<TraceRow>* trace) {
    TsicAgent ag(c, t, a, 99);
    sim::Simulator s1(c, cache::Variant::SizeWeighted, 4);
    auto m1 = ag.run_episode(s1, true, 0.5, nullptr);
    sim::Simulator s2(c, cache::Variant::SizeWeighted, 4);
    auto m2 = ag.run_episode(s2, false, 0.0, trace);
    return std::pair{m1, m2};
  };

  std::vector<TraceRow> trace1, trace2;
  auto [train1, eval1] = run_once(&trace1);
  auto [train2, eval2] = run_once(&trace2);

  CHECK(train1.tasks == 60);
  CHECK(eval1.tasks == 60);
  CHECK(eval1.sum_total_s == eval2.sum_total_s);
  CHECK(train1.sum_total_s == train2.sum_total_s);
  REQUIRE(trace1.size() == 60);
  for (std::size_t i = 0; i < trace1.size(); ++i) {
    CHECK(trace1[i].task_id == trace2[i].task_id);
    CHECK(trace1[i].action_node == trace2[i].action_node);
    CHECK(trace1[i].reward == trace2[i].reward);
  }
  for (const auto& row : trace1) CHECK(row.reward <= 0.0);
}

TEST_CASE("replay pushes equal completed reward events in learning mode") {
  sim::SimConfig c = small_world();
  TsicAgent ag(c, quick_train(), AgentConfig{}, 5);
  sim::Simulator s(c, cache::Variant::SizeWeighted, 4);
  auto m = ag.run_episode(s, true, 0.5);
  CHECK(m.tasks == 60);
  CHECK(ag.scheduling_memory().size() == 60);
  CHECK(ag.caching_memory().size() == 60);
  CHECK(ag.reward_events() == 60);
}

TEST_CASE("caching updates fire exactly at the period boundaries") {
  sim::SimConfig c = small_world();
  c.num_tasks = 40;
  // one task arriving at every slot 5..44
  std::vector<Task> wl;
  for (int i = 0; i < 40; ++i) wl.push_back(plain_task(i, 5 + i, i % 4));
  TsicAgent ag(c, quick_train(), AgentConfig{}, 7);
  sim::Simulator s(c, cache::Variant::SizeWeighted, 4, wl);
  auto m = ag.run_episode(s, true, 0.5);
  // boundaries 10, 20, 30, 40 during arrivals plus 50 right after
  CHECK(m.caching_executions == 5);
}

TEST_CASE("a reward without a stashed decision is a hard error") {
  sim::SimConfig c = small_world();
  c.num_tasks = 1;
  std::vector<Task> wl{plain_task(0, 0)};
  sim::Simulator s(c, cache::Variant::SizeWeighted, 4, wl);

  // consume the request outside the agent so it never stashes
  auto ev = s.next_event();
  REQUIRE(ev.has_value());
  s.step(0, wl[0]);

  TsicAgent ag(c, quick_train(), AgentConfig{}, 9);
  CHECK_THROWS_AS(ag.run_episode(s, true, 0.5), std::logic_error);
}
