#pragma once

// Data-parallel inner loops. Each kernel exists twice: `ref` is the plain
// serial implementation kept as the test oracle; `par` is the OpenMP version
// used by the library. `par` results do not depend on the thread count: every
// output element is reduced by one thread in a fixed order.

#include <array>
#include <cstddef>
#include <span>

#include "kinetica/matrix.hpp"
#include "kinetica/sparse.hpp"

namespace kinetica::kernels {

/// Shape of a zero-padded convolution over a (C, z, y, x) tensor stored
/// channel-major. Padding is (k - 1) / 2 on every axis; output extent is
/// ceil(in / stride).
struct ConvShape {
    std::array<std::size_t, 3> in_dims{1, 1, 1};  // x, y, z
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::array<std::size_t, 3> kernel{1, 1, 1};
    std::array<std::size_t, 3> stride{1, 1, 1};

    std::array<std::size_t, 3> out_dims() const noexcept;
    std::size_t in_voxels() const noexcept { return in_dims[0] * in_dims[1] * in_dims[2]; }
    std::size_t out_voxels() const noexcept;
    std::size_t taps() const noexcept { return kernel[0] * kernel[1] * kernel[2]; }
    std::size_t weight_count() const noexcept { return out_channels * in_channels * taps(); }
};

namespace ref {

/// y = A x
void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> y);
/// Y = A X, column by column.
void spmm(const SparseMatrix& a, const Matrix& x, Matrix& y);

/// out = conv(in; w) + bias. `in` is in_voxels x in_channels, `out` out_voxels x out_channels.
void conv_forward(const ConvShape& s, const Matrix& in, std::span<const double> w,
                  std::span<const double> bias, Matrix& out);
/// grad_in = d<out, grad_out>/d in (overwrites grad_in).
void conv_backward_input(const ConvShape& s, const Matrix& grad_out, std::span<const double> w,
                         Matrix& grad_in);
/// grad_w, grad_b = d<out, grad_out>/d(w, b) (overwrites both).
void conv_backward_weights(const ConvShape& s, const Matrix& in, const Matrix& grad_out,
                           std::span<double> grad_w, std::span<double> grad_b);

}  // namespace ref

namespace par {

void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> y);
void spmm(const SparseMatrix& a, const Matrix& x, Matrix& y);
void conv_forward(const ConvShape& s, const Matrix& in, std::span<const double> w,
                  std::span<const double> bias, Matrix& out);
void conv_backward_input(const ConvShape& s, const Matrix& grad_out, std::span<const double> w,
                         Matrix& grad_in);
void conv_backward_weights(const ConvShape& s, const Matrix& in, const Matrix& grad_out,
                           std::span<double> grad_w, std::span<double> grad_b);

}  // namespace par

/// Cap on OpenMP workers; 0 restores the runtime default.
void set_thread_limit(int threads);
int thread_limit();

}  // namespace kinetica::kernels
