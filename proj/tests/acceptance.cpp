// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line. The node-count sweep is shared by the end-to-end criteria.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "tsic/agent.hpp"
#include "tsic/cache.hpp"
#include "tsic/harness.hpp"
#include "tsic/kernels.hpp"
#include "tsic/qnet.hpp"

using namespace tsic;
using namespace tsic::harness;

namespace {

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch())
      .count();
}

void report(int criterion, bool pass, const std::string& what) {
  std::printf("[criterion %d] %s: %s\n", criterion, pass ? "PASS" : "FAIL",
              what.c_str());
  std::fflush(stdout);
}

const std::vector<MetricsRow>& node_sweep_rows() {
  static const std::vector<MetricsRow> rows = [] {
    double t0 = now_s();
    auto r = run_experiment(preset_fig4());
    std::printf("  (node-count sweep: %zu rows in %.1f s, kernels=%s)\n",
                r.size(), now_s() - t0,
                std::string(kernels::isa_name(kernels::active_isa())).c_str());
    return r;
  }();
  return rows;
}

double seed_mean(const std::vector<MetricsRow>& rows, Policy p,
                 std::int64_t sweep, double MetricsRow::*field) {
  double sum = 0;
  int n = 0;
  for (const auto& r : rows)
    if (r.policy == p && r.sweep_value == sweep) {
      sum += r.*field;
      ++n;
    }
  return n ? sum / n : 0.0;
}

}  // namespace

TEST_CASE("criterion 1: masked action selection matches brute force") {
  double t0 = now_s();
  std::mt19937_64 rng(20240811);
  std::uniform_real_distribution<double> qv(-1.0, 1.0);
  std::uniform_int_distribution<int> nn(1, 10);
  std::uniform_int_distribution<int> bit(0, 1);

  bool all_ok = true;
  for (int iter = 0; iter < 10000; ++iter) {
    int n = nn(rng);
    std::vector<double> q(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n));
    for (auto& v : q) v = qv(rng);
    for (auto& m : mask) m = std::uint8_t(bit(rng));

    auto choice = agent::select_scheduling_action(q, mask, 0.0, rng);

    bool any = false;
    for (auto m : mask) any = any || m;
    if (any) {
      int best = -1;
      for (int i = 0; i < n; ++i)
        if (mask[std::size_t(i)] &&
            (best < 0 || q[std::size_t(i)] > q[std::size_t(best)]))
          best = i;
      all_ok = all_ok && choice.node == best;
    }
    std::vector<NodeId> better;
    for (int i = 0; i < n; ++i)
      if (q[std::size_t(i)] > q[std::size_t(choice.node)]) better.push_back(i);
    all_ok = all_ok && choice.unscheduled_better == better;
  }
  double elapsed = now_s() - t0;
  bool in_time = elapsed < 10.0;
  report(1, all_ok && in_time,
         "10000 masked-argmax cases exact (" + std::to_string(elapsed) +
             " s)");
  CHECK(all_ok);
  CHECK(in_time);
}

namespace {

struct OracleRec {
  ImageId id;
  double f;
  double z;
  int order;
};

std::vector<ImageId> oracle_evictions(std::vector<OracleRec> cached,
                                      double incoming_z, double usable,
                                      cache::Variant v, std::size_t k) {
  std::vector<ImageId> out;
  auto total = [&] {
    double s = 0;
    for (auto& r : cached) s += r.z;
    return s;
  };
  auto pick_min = [&] {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cached.size(); ++i) {
      double hi = v == cache::Variant::SizeWeighted ? cached[i].f * cached[i].z
                                                    : cached[i].f;
      double hb = v == cache::Variant::SizeWeighted
                      ? cached[best].f * cached[best].z
                      : cached[best].f;
      if (hi < hb || (hi == hb && cached[i].order < cached[best].order))
        best = i;
    }
    return best;
  };
  while (incoming_z + total() > usable) {
    std::size_t i = pick_min();
    out.push_back(cached[i].id);
    cached.erase(cached.begin() + std::ptrdiff_t(i));
  }
  if (v == cache::Variant::FixedSlots) {
    while (cached.size() >= k) {
      std::size_t i = pick_min();
      out.push_back(cached[i].id);
      cached.erase(cached.begin() + std::ptrdiff_t(i));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("criterion 2: adaptive LFU equals the repeated-argmin oracle") {
  double t0 = now_s();
  std::mt19937_64 rng(77001);
  std::uniform_real_distribution<double> size_dist(253.07, 458.73);
  std::uniform_int_distribution<int> count_dist(1, 6);
  std::uniform_int_distribution<int> freq_dist(0, 6);
  std::uniform_int_distribution<int> variant_dist(0, 2);
  std::uniform_int_distribution<std::size_t> k_dist(1, 6);

  const cache::Variant variants[3] = {cache::Variant::SizeWeighted,
                                      cache::Variant::FrequencyOnly,
                                      cache::Variant::FixedSlots};
  bool all_ok = true;
  for (int iter = 0; iter < 10000; ++iter) {
    int n = count_dist(rng);
    std::vector<Image> images;
    for (int m = 0; m <= n; ++m) images.push_back(Image{m, size_dist(rng)});

    double cached_total = 0;
    for (int m = 0; m < n; ++m) cached_total += images[std::size_t(m)].size_mb;
    double incoming_z = images[std::size_t(n)].size_mb;
    std::uniform_real_distribution<double> cap_dist(
        std::max(cached_total, incoming_z),
        cached_total + incoming_z + 120.0);
    double usable = cap_dist(rng);
    cache::Variant v = variants[std::size_t(variant_dist(rng))];
    std::size_t k = k_dist(rng);

    cache::CacheManager mgr(v, k, images, 1);
    NodeState node(0, Point2{0, 0}, 8.0, 1024.0, usable, 10.0, 30.0,
                   images.size());
    std::vector<OracleRec> oracle;
    for (int m = 0; m < n; ++m) {
      int freq = freq_dist(rng);
      mgr.seed_image(node, m);
      for (int i = 0; i < freq; ++i) mgr.touch(0, m);
      oracle.push_back(
          OracleRec{m, double(freq), images[std::size_t(m)].size_mb, m});
    }
    auto got = mgr.ensure_capacity(node, images[std::size_t(n)]);
    auto expect = oracle_evictions(oracle, incoming_z, usable, v, k);
    all_ok = all_ok && got.ok && got.evicted == expect;
  }
  double elapsed = now_s() - t0;
  bool in_time = elapsed < 30.0;
  report(2, all_ok && in_time,
         "10000 eviction sequences exact (" + std::to_string(elapsed) + " s)");
  CHECK(all_ok);
  CHECK(in_time);
}

TEST_CASE("criterion 3: gradients match central finite differences") {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<int> in_dist(3, 8);
  std::uniform_int_distribution<int> hid_dist(4, 8);
  std::uniform_int_distribution<int> nm_dist(2, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> yv(-1.0, 1.0);

  bool all_ok = true;
  double worst = 0.0;
  for (int net_i = 0; net_i < 50; ++net_i) {
    qnet::NetworkDims d;
    d.node_in = in_dist(rng);
    d.task_in = in_dist(rng);
    d.request_in = in_dist(rng);
    d.hidden = hid_dist(rng);
    d.num_nodes = nm_dist(rng);
    d.num_images = nm_dist(rng);
    qnet::QNetwork net(d, 5000 + std::uint64_t(net_i));

    auto rand_state = [&] {
      qnet::EncodedState s;
      s.node_block.resize(std::size_t(d.node_in));
      s.task_block.resize(std::size_t(d.task_in));
      s.request_block.resize(std::size_t(d.request_in));
      for (auto& v : s.node_block) v = unit(rng);
      for (auto& v : s.task_block) v = unit(rng);
      for (auto& v : s.request_block) v = unit(rng);
      return s;
    };

    std::vector<qnet::Transition> keep;
    for (int i = 0; i < 4; ++i) {
      qnet::Transition t;
      t.state = rand_state();
      t.action = int(rng() % std::uint64_t(d.scheduling_actions()));
      keep.push_back(std::move(t));
    }
    for (int i = 0; i < 4; ++i) {
      qnet::Transition t;
      t.state = rand_state();
      t.action = int(rng() % std::uint64_t(d.caching_actions()));
      keep.push_back(std::move(t));
    }
    qnet::QNetwork::Batch bs, bc;
    for (int i = 0; i < 4; ++i) {
      bs.items.push_back(&keep[std::size_t(i)]);
      bs.targets.push_back(yv(rng));
      bc.items.push_back(&keep[std::size_t(4 + i)]);
      bc.targets.push_back(yv(rng));
    }

    std::vector<double> grad;
    net.loss_and_grad(bs, bc, grad);
    const double h = 1e-5;
    auto& params = net.policy_params();
    for (std::size_t p = 0; p < params.size(); ++p) {
      double orig = params[p];
      params[p] = orig + h;
      double up = net.loss(bs, bc);
      params[p] = orig - h;
      double down = net.loss(bs, bc);
      params[p] = orig;
      double fd = (up - down) / (2.0 * h);
      double mag = std::max(std::fabs(fd), std::fabs(grad[p]));
      if (mag <= 1e-7) continue;  // dead path, FD carries only noise
      double rel = std::fabs(fd - grad[p]) / mag;
      worst = std::max(worst, rel);
      all_ok = all_ok && rel < 1e-4;
    }
  }
  report(3, all_ok,
         "50 networks, worst relative gradient error " + std::to_string(worst));
  CHECK(all_ok);
}

TEST_CASE("criterion 4: double-DQN target worked example") {
  std::vector<double> qp{0.2, 0.8}, qt{0.5, 0.3};
  double y = qnet::double_dqn_target(1.0, qp, qt, 0.5, false);
  bool exact = y == 1.0 + 0.5 * 0.3;  // 1.15: argmax differs from target max
  double y0 = qnet::double_dqn_target(1.0, qp, qt, 0.0, false);
  bool myopic = y0 == 1.0;
  report(4, exact && myopic,
         "y = " + std::to_string(y) + ", gamma=0 gives y = r");
  CHECK(exact);
  CHECK(myopic);
}

TEST_CASE("criterion 5: TSIC total delay beats the baselines at 5 nodes") {
  double t0 = now_s();
  const auto& rows = node_sweep_rows();
  double elapsed_all = now_s() - t0;

  const auto seeds = preset_fig4().seeds;
  int wins = 0;
  for (auto seed : seeds) {
    double tsic = 0, grd = 0, rr = 0;
    for (const auto& r : rows) {
      if (r.sweep_value != 5 || r.seed != seed) continue;
      if (r.policy == Policy::TSIC) tsic = r.mean_total_s;
      if (r.policy == Policy::GRD) grd = r.mean_total_s;
      if (r.policy == Policy::RR) rr = r.mean_total_s;
    }
    if (tsic <= grd && tsic <= rr) ++wins;
  }
  double tsic_mean =
      seed_mean(rows, Policy::TSIC, 5, &MetricsRow::mean_total_s);
  double rr_mean = seed_mean(rows, Policy::RR, 5, &MetricsRow::mean_total_s);
  bool margin = tsic_mean <= 0.9 * rr_mean;
  bool enough_wins = wins >= 4;
  bool in_time = elapsed_all < 300.0;

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "wins %d/5, TSIC %.2f s vs RR %.2f s (-%.0f%%), sweep %.0f s",
                wins, tsic_mean, rr_mean, 100.0 * (1.0 - tsic_mean / rr_mean),
                elapsed_all);
  report(5, enough_wins && margin && in_time, buf);
  CHECK(enough_wins);
  CHECK(margin);
  CHECK(in_time);
}

TEST_CASE("criterion 6: TSIC waiting delay is strictly smallest at 5 nodes") {
  const auto& rows = node_sweep_rows();
  const auto seeds = preset_fig4().seeds;
  int wins = 0;
  for (auto seed : seeds) {
    double tsic = 0, grd = 0, rr = 0;
    for (const auto& r : rows) {
      if (r.sweep_value != 5 || r.seed != seed) continue;
      if (r.policy == Policy::TSIC) tsic = r.mean_wait_s;
      if (r.policy == Policy::GRD) grd = r.mean_wait_s;
      if (r.policy == Policy::RR) rr = r.mean_wait_s;
    }
    if (tsic < grd && tsic < rr) ++wins;
  }
  bool pass = wins >= 4;
  report(6, pass, "strictly smallest waiting delay on " +
                      std::to_string(wins) + "/5 seeds");
  CHECK(pass);
}

TEST_CASE("criterion 7: adaptive size-weighted cache wins the variant sweep") {
  double t0 = now_s();
  auto rows = run_experiment(preset_fig3());
  double elapsed = now_s() - t0;

  auto avg_wait = [&](cache::Variant v, std::optional<std::int64_t> sweep) {
    double sum = 0;
    int n = 0;
    for (const auto& r : rows) {
      if (r.cache != v) continue;
      if (sweep && r.sweep_value != *sweep) continue;
      sum += r.mean_wait_s;
      ++n;
    }
    return n ? sum / n : 0.0;
  };

  double adp = avg_wait(cache::Variant::SizeWeighted, std::nullopt);
  double frq = avg_wait(cache::Variant::FrequencyOnly, std::nullopt);
  double best_fixed = std::numeric_limits<double>::infinity();
  for (std::int64_t k : preset_fig3().sweep_values)
    best_fixed = std::min(best_fixed, avg_wait(cache::Variant::FixedSlots, k));

  bool pass = adp <= frq && adp <= best_fixed;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "mean wait ADP %.2f s, ADP-FRQ %.2f s, best fixed %.2f s "
                "(%.0f s)",
                adp, frq, best_fixed, elapsed);
  report(7, pass, buf);
  CHECK(adp <= frq);
  CHECK(adp <= best_fixed);
}

TEST_CASE("criterion 8: TSIC waiting delay trends down with more nodes") {
  const auto& rows = node_sweep_rows();
  std::vector<double> wait;
  for (std::int64_t n : preset_fig4().sweep_values)
    wait.push_back(seed_mean(rows, Policy::TSIC, n, &MetricsRow::mean_wait_s));

  bool pass = true;
  std::string series;
  for (std::size_t i = 0; i < wait.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%.2f", i ? " " : "", wait[i]);
    series += buf;
    if (i > 0 && wait[i] > 1.10 * wait[i - 1]) pass = false;
  }
  report(8, pass, "seed-averaged waiting delay per node count: " + series);
  CHECK(pass);
}

TEST_CASE("criterion 9: repeated preset runs emit byte-identical CSV") {
  // the node-count preset at reduced scale, run twice with one config
  auto cfg = preset_fig4();
  cfg.sweep_values = {3};
  cfg.seeds = {1, 2};
  cfg.sim.num_tasks = 80;
  cfg.agent.train_episodes = 1;

  auto a = metrics_to_csv(run_experiment(cfg));
  auto b = metrics_to_csv(run_experiment(cfg));
  bool pass = a == b && !a.empty();
  report(9, pass, "two runs, " + std::to_string(a.size()) + " bytes each");
  CHECK(pass);
}
