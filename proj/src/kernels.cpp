#include "tsic/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace tsic::kernels {

namespace scalar {

void matvec(std::span<double> y, std::span<const double> w,
            std::span<const double> x, std::span<const double> bias,
            std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = w.data() + i * cols;
    double acc = bias.empty() ? 0.0 : bias[i];
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void matvec_t_acc(std::span<double> xgrad, std::span<const double> w,
                  std::span<const double> g, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double gi = g[i];
    if (gi == 0.0) continue;
    const double* row = w.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) xgrad[j] += gi * row[j];
  }
}

void outer_acc(std::span<double> wgrad, std::span<const double> g,
               std::span<const double> x, std::size_t rows,
               std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double gi = g[i];
    if (gi == 0.0) continue;
    double* row = wgrad.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += gi * x[j];
  }
}

void relu(std::span<double> v) {
  for (double& e : v)
    if (e < 0.0) e = 0.0;
}

void relu_backward(std::span<double> grad, std::span<const double> pre) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (pre[i] <= 0.0) grad[i] = 0.0;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace scalar

namespace {

struct KernelTable {
  void (*matvec)(std::span<double>, std::span<const double>,
                 std::span<const double>, std::span<const double>,
                 std::size_t, std::size_t);
  void (*matvec_t_acc)(std::span<double>, std::span<const double>,
                       std::span<const double>, std::size_t, std::size_t);
  void (*outer_acc)(std::span<double>, std::span<const double>,
                    std::span<const double>, std::size_t, std::size_t);
  void (*relu)(std::span<double>);
  void (*relu_backward)(std::span<double>, std::span<const double>);
  void (*axpy)(double, std::span<const double>, std::span<double>);
  double (*dot)(std::span<const double>, std::span<const double>);
};

constexpr KernelTable kScalarTable{
    scalar::matvec, scalar::matvec_t_acc, scalar::outer_acc,
    scalar::relu,   scalar::relu_backward, scalar::axpy,
    scalar::dot};

#if defined(__x86_64__) || defined(_M_X64)
constexpr KernelTable kAvx2Table{
    avx2::matvec, avx2::matvec_t_acc, avx2::outer_acc,
    avx2::relu,   avx2::relu_backward, avx2::axpy,
    avx2::dot};
#endif

Isa detect_isa() {
  if (const char* env = std::getenv("TSIC_KERNELS")) {
    std::string v(env);
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2" && avx2_supported()) return Isa::avx2;
  }
  return avx2_supported() ? Isa::avx2 : Isa::scalar;
}

std::atomic<const KernelTable*> g_table{nullptr};
std::atomic<Isa> g_isa{Isa::scalar};

const KernelTable* table_for(Isa isa) {
#if defined(__x86_64__) || defined(_M_X64)
  if (isa == Isa::avx2) return &kAvx2Table;
#endif
  (void)isa;
  return &kScalarTable;
}

const KernelTable& table() {
  const KernelTable* t = g_table.load(std::memory_order_acquire);
  if (t == nullptr) {
    Isa isa = detect_isa();
    g_isa.store(isa, std::memory_order_relaxed);
    t = table_for(isa);
    g_table.store(t, std::memory_order_release);
  }
  return *t;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() {
  table();
  return g_isa.load(std::memory_order_relaxed);
}

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_supported())
    throw std::runtime_error("AVX2 kernels requested but CPU lacks avx2/fma");
  g_isa.store(isa, std::memory_order_relaxed);
  g_table.store(table_for(isa), std::memory_order_release);
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

void matvec(std::span<double> y, std::span<const double> w,
            std::span<const double> x, std::span<const double> bias,
            std::size_t rows, std::size_t cols) {
  table().matvec(y, w, x, bias, rows, cols);
}

void matvec_t_acc(std::span<double> xgrad, std::span<const double> w,
                  std::span<const double> g, std::size_t rows,
                  std::size_t cols) {
  table().matvec_t_acc(xgrad, w, g, rows, cols);
}

void outer_acc(std::span<double> wgrad, std::span<const double> g,
               std::span<const double> x, std::size_t rows,
               std::size_t cols) {
  table().outer_acc(wgrad, g, x, rows, cols);
}

void relu(std::span<double> v) { table().relu(v); }

void relu_backward(std::span<double> grad, std::span<const double> pre) {
  table().relu_backward(grad, pre);
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  table().axpy(a, x, y);
}

double dot(std::span<const double> a, std::span<const double> b) {
  return table().dot(a, b);
}

}  // namespace tsic::kernels
