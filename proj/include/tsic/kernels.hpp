#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense math kernels used by the Q-network. Every kernel has a scalar
// reference implementation and an AVX2 variant; the active one is picked
// at runtime from CPU capabilities (overridable via set_isa() or the
// TSIC_KERNELS environment variable, values "scalar" / "avx2").
namespace tsic::kernels {

enum class Isa { scalar, avx2 };

// Level currently routed to by the dispatch table.
Isa active_isa();

// Force a level. Throws std::runtime_error if the CPU lacks support.
void set_isa(Isa isa);

bool avx2_supported();

std::string_view isa_name(Isa isa);

// y = W x + bias, W row-major (rows x cols), y length rows.
void matvec(std::span<double> y, std::span<const double> w,
            std::span<const double> x, std::span<const double> bias,
            std::size_t rows, std::size_t cols);

// xgrad += W^T g, W row-major (rows x cols), g length rows.
void matvec_t_acc(std::span<double> xgrad, std::span<const double> w,
                  std::span<const double> g, std::size_t rows,
                  std::size_t cols);

// wgrad += g x^T (outer product accumulate), wgrad row-major (rows x cols).
void outer_acc(std::span<double> wgrad, std::span<const double> g,
               std::span<const double> x, std::size_t rows, std::size_t cols);

// v = max(v, 0) elementwise.
void relu(std::span<double> v);

// grad[i] = pre[i] > 0 ? grad[i] : 0
void relu_backward(std::span<double> grad, std::span<const double> pre);

// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);

double dot(std::span<const double> a, std::span<const double> b);

// Reference implementations, exposed for equivalence tests.
namespace scalar {
void matvec(std::span<double> y, std::span<const double> w,
            std::span<const double> x, std::span<const double> bias,
            std::size_t rows, std::size_t cols);
void matvec_t_acc(std::span<double> xgrad, std::span<const double> w,
                  std::span<const double> g, std::size_t rows,
                  std::size_t cols);
void outer_acc(std::span<double> wgrad, std::span<const double> g,
               std::span<const double> x, std::size_t rows, std::size_t cols);
void relu(std::span<double> v);
void relu_backward(std::span<double> grad, std::span<const double> pre);
void axpy(double a, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> a, std::span<const double> b);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
void matvec(std::span<double> y, std::span<const double> w,
            std::span<const double> x, std::span<const double> bias,
            std::size_t rows, std::size_t cols);
void matvec_t_acc(std::span<double> xgrad, std::span<const double> w,
                  std::span<const double> g, std::size_t rows,
                  std::size_t cols);
void outer_acc(std::span<double> wgrad, std::span<const double> g,
               std::span<const double> x, std::size_t rows, std::size_t cols);
void relu(std::span<double> v);
void relu_backward(std::span<double> grad, std::span<const double> pre);
void axpy(double a, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> a, std::span<const double> b);
}  // namespace avx2
#endif

}  // namespace tsic::kernels
