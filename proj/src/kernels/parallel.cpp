// OpenMP kernels. Work is split over independent output rows or channels so
// each output element is accumulated by exactly one thread in a fixed order;
// results therefore do not depend on the thread count.

#include <algorithm>
#include <cstdint>

#include <omp.h>

#include "kinetica/error.hpp"
#include "kinetica/kernels.hpp"

namespace kinetica::kernels {
namespace {

int g_thread_limit = 0;

int workers() { return g_thread_limit > 0 ? g_thread_limit : omp_get_max_threads(); }

using i64 = std::int64_t;

/// Output index range [lo, hi) along one axis for which the input index
/// o * stride + k - pad lies inside [0, n_in).
inline void valid_range(i64 n_in, i64 n_out, i64 stride, i64 k, i64 pad, i64& lo, i64& hi) {
    const i64 off = k - pad;
    lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
    const i64 last = n_in - 1 - off;  // largest o * stride allowed
    hi = last < 0 ? 0 : std::min(n_out, last / stride + 1);
    if (hi < lo) hi = lo;
}

struct Geometry {
    i64 in[3], out[3], k[3], s[3], p[3];
    explicit Geometry(const ConvShape& sh) {
        const auto od = sh.out_dims();
        for (int a = 0; a < 3; ++a) {
            in[a] = static_cast<i64>(sh.in_dims[a]);
            out[a] = static_cast<i64>(od[a]);
            k[a] = static_cast<i64>(sh.kernel[a]);
            s[a] = static_cast<i64>(sh.stride[a]);
            p[a] = (k[a] - 1) / 2;
        }
    }
};

// Calls fn(out_row_offset, in_row_offset, x_lo, x_hi, x_in_offset) for every
// (z, y) row of output that a single tap touches.
template <class Fn>
inline void for_each_tap_row(const Geometry& g, i64 kz, i64 ky, i64 kx, Fn&& fn) {
    i64 zlo, zhi, ylo, yhi, xlo, xhi;
    valid_range(g.in[2], g.out[2], g.s[2], kz, g.p[2], zlo, zhi);
    valid_range(g.in[1], g.out[1], g.s[1], ky, g.p[1], ylo, yhi);
    valid_range(g.in[0], g.out[0], g.s[0], kx, g.p[0], xlo, xhi);
    if (xhi <= xlo) return;
    for (i64 oz = zlo; oz < zhi; ++oz) {
        const i64 iz = oz * g.s[2] + kz - g.p[2];
        for (i64 oy = ylo; oy < yhi; ++oy) {
            const i64 iy = oy * g.s[1] + ky - g.p[1];
            fn((oz * g.out[1] + oy) * g.out[0], (iz * g.in[1] + iy) * g.in[0], xlo, xhi, kx - g.p[0]);
        }
    }
}

void check(const ConvShape& s, const Matrix& in_like, const Matrix& out_like) {
    if (in_like.rows() != s.in_voxels() || in_like.cols() != s.in_channels ||
        out_like.rows() != s.out_voxels() || out_like.cols() != s.out_channels) {
        throw ShapeError("convolution operand shapes do not match ConvShape");
    }
}

}  // namespace

void set_thread_limit(int threads) { g_thread_limit = std::max(0, threads); }
int thread_limit() { return workers(); }

namespace par {

void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> y) {
    if (x.size() != a.cols() || y.size() != a.rows()) throw ShapeError("spmv: shape mismatch");
    const auto* ptr = a.row_ptr().data();
    const auto* idx = a.col_idx().data();
    const auto* val = a.values().data();
    const auto rows = static_cast<i64>(a.rows());
#pragma omp parallel for schedule(static) num_threads(workers())
    for (i64 r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t k = ptr[r]; k < ptr[r + 1]; ++k) s += val[k] * x[idx[k]];
        y[static_cast<std::size_t>(r)] = s;
    }
}

void spmm(const SparseMatrix& a, const Matrix& x, Matrix& y) {
    if (x.rows() != a.cols() || y.rows() != a.rows() || x.cols() != y.cols()) {
        throw ShapeError("spmm: shape mismatch");
    }
    for (std::size_t c = 0; c < x.cols(); ++c) spmv(a, x.col(c), y.col(c));
}

void conv_forward(const ConvShape& s, const Matrix& in, std::span<const double> w,
                  std::span<const double> bias, Matrix& out) {
    check(s, in, out);
    const Geometry g(s);
    const auto taps = s.taps();
    const auto cout = static_cast<i64>(s.out_channels);
#pragma omp parallel for schedule(static) num_threads(workers())
    for (i64 co = 0; co < cout; ++co) {
        auto o = out.col(static_cast<std::size_t>(co));
        std::fill(o.begin(), o.end(), bias[static_cast<std::size_t>(co)]);
        for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
            const auto src = in.col(ci);
            const double* wk = w.data() + (static_cast<std::size_t>(co) * s.in_channels + ci) * taps;
            for (i64 kz = 0; kz < g.k[2]; ++kz)
                for (i64 ky = 0; ky < g.k[1]; ++ky)
                    for (i64 kx = 0; kx < g.k[0]; ++kx) {
                        const double wv = *wk++;
                        for_each_tap_row(g, kz, ky, kx, [&](i64 orow, i64 irow, i64 lo, i64 hi, i64 xoff) {
                            double* op = o.data() + orow;
                            const double* ip = src.data() + irow;
                            if (g.s[0] == 1) {
                                for (i64 ox = lo; ox < hi; ++ox) op[ox] += wv * ip[ox + xoff];
                            } else {
                                for (i64 ox = lo; ox < hi; ++ox) op[ox] += wv * ip[ox * g.s[0] + xoff];
                            }
                        });
                    }
        }
    }
}

void conv_backward_input(const ConvShape& s, const Matrix& grad_out, std::span<const double> w,
                         Matrix& grad_in) {
    check(s, grad_in, grad_out);
    const Geometry g(s);
    const auto taps = s.taps();
    const auto cin = static_cast<i64>(s.in_channels);
#pragma omp parallel for schedule(static) num_threads(workers())
    for (i64 ci = 0; ci < cin; ++ci) {
        auto gi = grad_in.col(static_cast<std::size_t>(ci));
        std::fill(gi.begin(), gi.end(), 0.0);
        for (std::size_t co = 0; co < s.out_channels; ++co) {
            const auto go = grad_out.col(co);
            const double* wk = w.data() + (co * s.in_channels + static_cast<std::size_t>(ci)) * taps;
            for (i64 kz = 0; kz < g.k[2]; ++kz)
                for (i64 ky = 0; ky < g.k[1]; ++ky)
                    for (i64 kx = 0; kx < g.k[0]; ++kx) {
                        const double wv = *wk++;
                        for_each_tap_row(g, kz, ky, kx, [&](i64 orow, i64 irow, i64 lo, i64 hi, i64 xoff) {
                            const double* gp = go.data() + orow;
                            double* ip = gi.data() + irow;
                            if (g.s[0] == 1) {
                                for (i64 ox = lo; ox < hi; ++ox) ip[ox + xoff] += wv * gp[ox];
                            } else {
                                for (i64 ox = lo; ox < hi; ++ox) ip[ox * g.s[0] + xoff] += wv * gp[ox];
                            }
                        });
                    }
        }
    }
}

void conv_backward_weights(const ConvShape& s, const Matrix& in, const Matrix& grad_out,
                           std::span<double> grad_w, std::span<double> grad_b) {
    check(s, in, grad_out);
    if (grad_w.size() != s.weight_count() || grad_b.size() != s.out_channels) {
        throw ShapeError("conv_backward_weights: gradient buffers have wrong size");
    }
    const Geometry g(s);
    const auto taps = s.taps();
    const auto cout = static_cast<i64>(s.out_channels);
#pragma omp parallel for schedule(static) num_threads(workers())
    for (i64 co = 0; co < cout; ++co) {
        const auto go = grad_out.col(static_cast<std::size_t>(co));
        double gb = 0.0;
        for (double v : go) gb += v;
        grad_b[static_cast<std::size_t>(co)] = gb;
        for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
            const auto src = in.col(ci);
            double* wk = grad_w.data() + (static_cast<std::size_t>(co) * s.in_channels + ci) * taps;
            for (i64 kz = 0; kz < g.k[2]; ++kz)
                for (i64 ky = 0; ky < g.k[1]; ++ky)
                    for (i64 kx = 0; kx < g.k[0]; ++kx) {
                        double acc = 0.0;
                        for_each_tap_row(g, kz, ky, kx, [&](i64 orow, i64 irow, i64 lo, i64 hi, i64 xoff) {
                            const double* gp = go.data() + orow;
                            const double* ip = src.data() + irow;
                            double row = 0.0;
                            if (g.s[0] == 1) {
                                for (i64 ox = lo; ox < hi; ++ox) row += gp[ox] * ip[ox + xoff];
                            } else {
                                for (i64 ox = lo; ox < hi; ++ox) row += gp[ox] * ip[ox * g.s[0] + xoff];
                            }
                            acc += row;
                        });
                        *wk++ = acc;
                    }
        }
    }
}

}  // namespace par
}  // namespace kinetica::kernels
