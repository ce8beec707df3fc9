#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

// State-sharing multi-action Q-network: three encoder sub-networks (node
// state, task features, request distribution) feed a scheduling head and a
// caching head. The scheduling head sees only the node and task encodings;
// the caching head additionally sees the request-distribution encoding.
// Policy and target weight sets have identical layout.
namespace tsic::qnet {

// The RL observation, kept as the three sub-network input blocks.
struct EncodedState {
  std::vector<double> node_block;     // per node: avail ratios + image bits
  std::vector<double> task_block;     // one-hot service, data size, location
  std::vector<double> request_block;  // node x image request distribution
};

enum class Head { scheduling, caching };
enum class WeightSet { policy, target };

struct NetworkDims {
  int node_in = 0;
  int task_in = 0;
  int request_in = 0;
  int hidden = 64;
  int num_nodes = 0;
  int num_images = 0;

  int scheduling_actions() const { return num_nodes; }
  int caching_actions() const { return num_nodes * num_images; }
  bool operator==(const NetworkDims&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double discount = 0.5;        // gamma
  int batch_size = 32;          // not given by the delay study; see README
  int replay_capacity = 10000;
  int target_sync_period = 5;   // reward events between target syncs
  int hidden_width = 64;
  // SGD diverges on raw squared-delay targets without this
  double max_grad_norm = 10.0;
};

struct Transition {
  EncodedState state;
  int action = 0;
  double reward = 0.0;
  EncodedState next_state;
  bool terminal = false;
};

// Bounded FIFO ring; sampling is uniform without replacement.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  // i = 0 is the oldest retained transition.
  const Transition& at(std::size_t i) const;
  std::vector<const Transition*> sample(std::size_t batch,
                                        std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // slot the next push overwrites once full
  std::vector<Transition> items_;
};

// y = r + gamma * Q_target(s', argmax_a Q_policy(s', a)); terminal -> r.
// Argmax ties resolve to the lowest action index.
double double_dqn_target(double reward, std::span<const double> q_policy_next,
                         std::span<const double> q_target_next,
                         double discount, bool terminal);

class QNetwork {
 public:
  struct Batch {
    std::vector<const Transition*> items;
    std::vector<double> targets;  // frozen y values, one per item
  };

  struct StepLosses {
    std::optional<double> scheduling;
    std::optional<double> caching;
  };

  QNetwork(NetworkDims dims, std::uint64_t init_seed);

  const NetworkDims& dims() const { return dims_; }
  std::size_t param_count() const { return policy_.size(); }

  std::vector<double> forward(const EncodedState& state, Head head,
                              WeightSet set) const;

  // Mean squared error against frozen targets, summed over the two heads.
  double loss(const Batch& scheduling, const Batch& caching,
              WeightSet set = WeightSet::policy) const;

  // Same loss; also accumulates d(loss)/d(theta) into grad (resized and
  // zeroed here). Shared encoder gradients pick up both heads' batches.
  double loss_and_grad(const Batch& scheduling, const Batch& caching,
                       std::vector<double>& grad,
                       double* scheduling_loss = nullptr,
                       double* caching_loss = nullptr) const;

  // One SGD step from freshly sampled batches; a memory shorter than the
  // batch size is skipped. Throws on non-finite loss.
  StepLosses train_step(ReplayMemory& scheduling, ReplayMemory& caching,
                        const TrainConfig& cfg, std::mt19937_64& rng);

  void sync_target();  // target := policy, exact copy

  std::vector<double>& policy_params() { return policy_; }
  const std::vector<double>& policy_params() const { return policy_; }
  const std::vector<double>& target_params() const { return target_; }
  void set_policy_params(std::vector<double> params);

  // Binary checkpoint (shape header + raw little-endian doubles);
  // round-trips bit-exactly.
  void save(const std::filesystem::path& path) const;
  static QNetwork load(const std::filesystem::path& path);

 private:
  struct LayerView {
    std::size_t w_off = 0;
    std::size_t b_off = 0;
    int in = 0;
    int out = 0;
  };
  struct EncoderView {
    LayerView l1, l2;
  };
  struct EncoderActs {
    std::vector<double> z1, a1, z2, a2;
  };

  void build_layout();
  void init_params(std::uint64_t seed);
  void encode(const EncoderView& enc, std::span<const double> params,
              std::span<const double> input, EncoderActs& acts) const;
  void encoder_backward(const EncoderView& enc,
                        std::span<const double> params,
                        std::span<const double> input,
                        const EncoderActs& acts, std::vector<double>& g_out,
                        std::vector<double>& grad) const;
  double head_batch_grad(const Batch& batch, Head head,
                         std::vector<double>& grad) const;

  NetworkDims dims_;
  EncoderView node_enc_, task_enc_, req_enc_;
  LayerView sched_head_, cache_head_;
  std::vector<double> policy_;
  std::vector<double> target_;
};

}  // namespace tsic::qnet
