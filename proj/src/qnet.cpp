#include "tsic/qnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tsic/kernels.hpp"

namespace tsic::qnet {

namespace {

void check_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("non-finite ") + what +
                             " in Q-network training");
}

}  // namespace

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be >0");
  items_.reserve(capacity);
}

void ReplayMemory::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
}

const Transition& ReplayMemory::at(std::size_t i) const {
  if (i >= items_.size()) throw std::out_of_range("replay index");
  if (items_.size() < capacity_) return items_[i];
  return items_[(head_ + i) % capacity_];
}

std::vector<const Transition*> ReplayMemory::sample(
    std::size_t batch, std::mt19937_64& rng) const {
  if (batch > items_.size())
    throw std::logic_error("batch larger than replay memory");
  // Partial Fisher-Yates over the index range: uniform without replacement.
  std::vector<std::size_t> idx(items_.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (std::size_t j = 0; j < batch; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, idx.size() - 1);
    std::swap(idx[j], idx[pick(rng)]);
    out.push_back(&items_[idx[j]]);
  }
  return out;
}

double double_dqn_target(double reward, std::span<const double> q_policy_next,
                         std::span<const double> q_target_next,
                         double discount, bool terminal) {
  if (terminal) return reward;
  if (q_policy_next.empty() || q_policy_next.size() != q_target_next.size())
    throw std::invalid_argument("next-state Q vectors must match");
  std::size_t best = 0;
  for (std::size_t a = 1; a < q_policy_next.size(); ++a)
    if (q_policy_next[a] > q_policy_next[best]) best = a;
  return reward + discount * q_target_next[best];
}

QNetwork::QNetwork(NetworkDims dims, std::uint64_t init_seed) : dims_(dims) {
  if (dims_.node_in <= 0 || dims_.task_in <= 0 || dims_.request_in <= 0 ||
      dims_.hidden <= 0 || dims_.num_nodes <= 0 || dims_.num_images <= 0)
    throw std::invalid_argument("network dims must be positive");
  build_layout();
  init_params(init_seed);
  target_ = policy_;
}

void QNetwork::build_layout() {
  std::size_t off = 0;
  auto layer = [&off](int in, int out) {
    LayerView v;
    v.in = in;
    v.out = out;
    v.w_off = off;
    off += std::size_t(in) * std::size_t(out);
    v.b_off = off;
    off += std::size_t(out);
    return v;
  };
  const int h = dims_.hidden;
  node_enc_ = {layer(dims_.node_in, h), layer(h, h)};
  task_enc_ = {layer(dims_.task_in, h), layer(h, h)};
  req_enc_ = {layer(dims_.request_in, h), layer(h, h)};
  sched_head_ = layer(2 * h, dims_.scheduling_actions());
  cache_head_ = layer(3 * h, dims_.caching_actions());
  policy_.assign(off, 0.0);
}

void QNetwork::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto init_layer = [&](const LayerView& l) {
    double limit = std::sqrt(6.0 / double(l.in + l.out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (std::size_t i = 0; i < std::size_t(l.in) * std::size_t(l.out); ++i)
      policy_[l.w_off + i] = u(rng);
    // biases get small random values too; an all-zero bias vector parks
    // dead-input units exactly on the relu kink
    for (std::size_t i = 0; i < std::size_t(l.out); ++i)
      policy_[l.b_off + i] = 0.1 * u(rng);
  };
  for (const auto* enc : {&node_enc_, &task_enc_, &req_enc_}) {
    init_layer(enc->l1);
    init_layer(enc->l2);
  }
  init_layer(sched_head_);
  init_layer(cache_head_);
}

void QNetwork::encode(const EncoderView& enc, std::span<const double> params,
                      std::span<const double> input,
                      EncoderActs& acts) const {
  auto run = [&](const LayerView& l, std::span<const double> x,
                 std::vector<double>& z, std::vector<double>& a) {
    z.resize(std::size_t(l.out));
    kernels::matvec(z, params.subspan(l.w_off, std::size_t(l.in) * l.out), x,
                    params.subspan(l.b_off, std::size_t(l.out)),
                    std::size_t(l.out), std::size_t(l.in));
    a = z;
    kernels::relu(a);
  };
  run(enc.l1, input, acts.z1, acts.a1);
  run(enc.l2, acts.a1, acts.z2, acts.a2);
}

std::vector<double> QNetwork::forward(const EncodedState& state, Head head,
                                      WeightSet set) const {
  if (int(state.node_block.size()) != dims_.node_in ||
      int(state.task_block.size()) != dims_.task_in ||
      int(state.request_block.size()) != dims_.request_in)
    throw std::invalid_argument("encoded state does not match network dims");

  std::span<const double> params =
      set == WeightSet::policy ? policy_ : target_;
  EncoderActs node, task, req;
  encode(node_enc_, params, state.node_block, node);
  encode(task_enc_, params, state.task_block, task);

  const LayerView& h = head == Head::scheduling ? sched_head_ : cache_head_;
  std::vector<double> concat;
  concat.reserve(std::size_t(h.in));
  concat.insert(concat.end(), node.a2.begin(), node.a2.end());
  concat.insert(concat.end(), task.a2.begin(), task.a2.end());
  if (head == Head::caching) {
    encode(req_enc_, params, state.request_block, req);
    concat.insert(concat.end(), req.a2.begin(), req.a2.end());
  }

  std::vector<double> q(std::size_t(h.out));
  kernels::matvec(q, params.subspan(h.w_off, std::size_t(h.in) * h.out),
                  concat, params.subspan(h.b_off, std::size_t(h.out)),
                  std::size_t(h.out), std::size_t(h.in));
  return q;
}

double QNetwork::loss(const Batch& scheduling, const Batch& caching,
                      WeightSet set) const {
  auto head_loss = [&](const Batch& b, Head head) {
    if (b.items.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < b.items.size(); ++i) {
      auto q = forward(b.items[i]->state, head, set);
      double diff = q[std::size_t(b.items[i]->action)] - b.targets[i];
      acc += diff * diff;
    }
    return acc / double(b.items.size());
  };
  return head_loss(scheduling, Head::scheduling) +
         head_loss(caching, Head::caching);
}

void QNetwork::encoder_backward(const EncoderView& enc,
                                std::span<const double> params,
                                std::span<const double> input,
                                const EncoderActs& acts,
                                std::vector<double>& g_out,
                                std::vector<double>& grad) const {
  // g_out = dL/d(a2); consumed in place.
  kernels::relu_backward(g_out, acts.z2);
  kernels::outer_acc(
      std::span<double>(grad).subspan(enc.l2.w_off,
                                      std::size_t(enc.l2.in) * enc.l2.out),
      g_out, acts.a1, std::size_t(enc.l2.out), std::size_t(enc.l2.in));
  kernels::axpy(1.0, g_out,
                std::span<double>(grad).subspan(enc.l2.b_off,
                                                std::size_t(enc.l2.out)));
  std::vector<double> g1(std::size_t(enc.l1.out), 0.0);
  kernels::matvec_t_acc(
      g1, params.subspan(enc.l2.w_off, std::size_t(enc.l2.in) * enc.l2.out),
      g_out, std::size_t(enc.l2.out), std::size_t(enc.l2.in));
  kernels::relu_backward(g1, acts.z1);
  kernels::outer_acc(
      std::span<double>(grad).subspan(enc.l1.w_off,
                                      std::size_t(enc.l1.in) * enc.l1.out),
      g1, input, std::size_t(enc.l1.out), std::size_t(enc.l1.in));
  kernels::axpy(1.0, g1,
                std::span<double>(grad).subspan(enc.l1.b_off,
                                                std::size_t(enc.l1.out)));
}

double QNetwork::head_batch_grad(const Batch& batch, Head head,
                                 std::vector<double>& grad) const {
  if (batch.items.empty()) return 0.0;
  if (batch.items.size() != batch.targets.size())
    throw std::invalid_argument("batch targets out of step with items");

  std::span<const double> params = policy_;
  const LayerView& h = head == Head::scheduling ? sched_head_ : cache_head_;
  const double inv_b = 1.0 / double(batch.items.size());
  const int hidden = dims_.hidden;
  double acc_loss = 0.0;

  EncoderActs node, task, req;
  std::vector<double> concat, g_concat;
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    const Transition& tr = *batch.items[i];
    const EncodedState& s = tr.state;
    encode(node_enc_, params, s.node_block, node);
    encode(task_enc_, params, s.task_block, task);
    concat.assign(node.a2.begin(), node.a2.end());
    concat.insert(concat.end(), task.a2.begin(), task.a2.end());
    if (head == Head::caching) {
      encode(req_enc_, params, s.request_block, req);
      concat.insert(concat.end(), req.a2.begin(), req.a2.end());
    }

    const auto a = std::size_t(tr.action);
    if (a >= std::size_t(h.out))
      throw std::out_of_range("action index outside head output");
    std::span<const double> w_row =
        params.subspan(h.w_off + a * std::size_t(h.in), std::size_t(h.in));
    double q = kernels::dot(w_row, concat) + params[h.b_off + a];
    double diff = q - batch.targets[i];
    acc_loss += diff * diff;
    double delta = 2.0 * inv_b * diff;

    // Head gradients: only the taken action's row is touched.
    kernels::axpy(delta, concat,
                  std::span<double>(grad).subspan(
                      h.w_off + a * std::size_t(h.in), std::size_t(h.in)));
    grad[h.b_off + a] += delta;

    g_concat.assign(std::size_t(h.in), 0.0);
    kernels::axpy(delta, w_row, g_concat);

    std::vector<double> g_node(g_concat.begin(), g_concat.begin() + hidden);
    std::vector<double> g_task(g_concat.begin() + hidden,
                               g_concat.begin() + 2 * hidden);
    encoder_backward(node_enc_, params, s.node_block, node, g_node, grad);
    encoder_backward(task_enc_, params, s.task_block, task, g_task, grad);
    if (head == Head::caching) {
      std::vector<double> g_req(g_concat.begin() + 2 * hidden,
                                g_concat.end());
      encoder_backward(req_enc_, params, s.request_block, req, g_req, grad);
    }
  }
  return acc_loss * inv_b;
}

double QNetwork::loss_and_grad(const Batch& scheduling, const Batch& caching,
                               std::vector<double>& grad,
                               double* scheduling_loss,
                               double* caching_loss) const {
  grad.assign(param_count(), 0.0);
  double ls = head_batch_grad(scheduling, Head::scheduling, grad);
  double lc = head_batch_grad(caching, Head::caching, grad);
  if (scheduling_loss) *scheduling_loss = ls;
  if (caching_loss) *caching_loss = lc;
  return ls + lc;
}

QNetwork::StepLosses QNetwork::train_step(ReplayMemory& scheduling,
                                          ReplayMemory& caching,
                                          const TrainConfig& cfg,
                                          std::mt19937_64& rng) {
  auto build_batch = [&](ReplayMemory& mem, Head head) {
    Batch b;
    if (mem.size() < std::size_t(cfg.batch_size)) return b;
    b.items = mem.sample(std::size_t(cfg.batch_size), rng);
    b.targets.reserve(b.items.size());
    for (const Transition* tr : b.items) {
      double y = tr->reward;
      if (!tr->terminal) {
        auto qp = forward(tr->next_state, head, WeightSet::policy);
        auto qt = forward(tr->next_state, head, WeightSet::target);
        y = double_dqn_target(tr->reward, qp, qt, cfg.discount, false);
      }
      b.targets.push_back(y);
    }
    return b;
  };

  Batch bs = build_batch(scheduling, Head::scheduling);
  Batch bc = build_batch(caching, Head::caching);
  StepLosses out;
  if (bs.items.empty() && bc.items.empty()) return out;

  std::vector<double> grad;
  double ls = 0.0, lc = 0.0;
  loss_and_grad(bs, bc, grad, &ls, &lc);
  check_finite(ls + lc, "loss");
  if (!bs.items.empty()) out.scheduling = ls;
  if (!bc.items.empty()) out.caching = lc;

  double step = -cfg.learning_rate;
  if (cfg.max_grad_norm > 0) {
    double norm = std::sqrt(kernels::dot(grad, grad));
    check_finite(norm, "gradient norm");
    if (norm > cfg.max_grad_norm) step *= cfg.max_grad_norm / norm;
  }
  kernels::axpy(step, grad, policy_);
  return out;
}

void QNetwork::sync_target() { target_ = policy_; }

void QNetwork::set_policy_params(std::vector<double> params) {
  if (params.size() != policy_.size())
    throw std::invalid_argument("parameter vector size mismatch");
  policy_ = std::move(params);
}

namespace {
constexpr char kCheckpointMagic[8] = {'T', 'S', 'I', 'C', 'Q', 'N', '1', '\n'};
}

void QNetwork::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  std::int64_t header[7] = {dims_.node_in,   dims_.task_in,
                            dims_.request_in, dims_.hidden,
                            dims_.num_nodes, dims_.num_images,
                            std::int64_t(param_count())};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(policy_.data()),
            std::streamsize(policy_.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(target_.data()),
            std::streamsize(target_.size() * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint write failed");
}

QNetwork QNetwork::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint for reading");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("bad checkpoint header");
  std::int64_t header[7];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw std::runtime_error("truncated checkpoint header");
  NetworkDims dims;
  dims.node_in = int(header[0]);
  dims.task_in = int(header[1]);
  dims.request_in = int(header[2]);
  dims.hidden = int(header[3]);
  dims.num_nodes = int(header[4]);
  dims.num_images = int(header[5]);
  QNetwork net(dims, 0);
  if (std::int64_t(net.param_count()) != header[6])
    throw std::runtime_error("checkpoint parameter count mismatch");
  in.read(reinterpret_cast<char*>(net.policy_.data()),
          std::streamsize(net.policy_.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(net.target_.data()),
          std::streamsize(net.target_.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint payload");
  return net;
}

}  // namespace tsic::qnet
