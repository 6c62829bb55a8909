// Straightforward serial kernels. These are the oracles for the OpenMP
// versions and are deliberately written tap-by-tap with explicit bounds tests.

#include <cstdint>

#include "kinetica/error.hpp"
#include "kinetica/kernels.hpp"

namespace kinetica::kernels {

std::array<std::size_t, 3> ConvShape::out_dims() const noexcept {
    std::array<std::size_t, 3> o{};
    for (int a = 0; a < 3; ++a) o[a] = (in_dims[a] + stride[a] - 1) / stride[a];
    return o;
}

std::size_t ConvShape::out_voxels() const noexcept {
    auto o = out_dims();
    return o[0] * o[1] * o[2];
}

namespace {

void check_conv(const ConvShape& s, const Matrix& in_like, std::size_t in_ch, const Matrix& out_like,
                std::size_t out_ch) {
    if (in_like.rows() != s.in_voxels() || in_like.cols() != in_ch || out_like.rows() != s.out_voxels() ||
        out_like.cols() != out_ch) {
        throw ShapeError("convolution operand shapes do not match ConvShape");
    }
}

std::int64_t pad(const ConvShape& s, int a) { return static_cast<std::int64_t>((s.kernel[a] - 1) / 2); }

}  // namespace

namespace ref {

void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> y) {
    if (x.size() != a.cols() || y.size() != a.rows()) throw ShapeError("spmv: shape mismatch");
    const auto& ptr = a.row_ptr();
    const auto& idx = a.col_idx();
    const auto& val = a.values();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (std::size_t k = ptr[r]; k < ptr[r + 1]; ++k) s += val[k] * x[idx[k]];
        y[r] = s;
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
    check_conv(s, in, s.in_channels, out, s.out_channels);
    const auto od = s.out_dims();
    const auto& id = s.in_dims;
    for (std::size_t co = 0; co < s.out_channels; ++co) {
        for (std::size_t oz = 0; oz < od[2]; ++oz)
            for (std::size_t oy = 0; oy < od[1]; ++oy)
                for (std::size_t ox = 0; ox < od[0]; ++ox) {
                    double acc = bias[co];
                    for (std::size_t ci = 0; ci < s.in_channels; ++ci)
                        for (std::size_t kz = 0; kz < s.kernel[2]; ++kz)
                            for (std::size_t ky = 0; ky < s.kernel[1]; ++ky)
                                for (std::size_t kx = 0; kx < s.kernel[0]; ++kx) {
                                    const auto iz = static_cast<std::int64_t>(oz * s.stride[2] + kz) - pad(s, 2);
                                    const auto iy = static_cast<std::int64_t>(oy * s.stride[1] + ky) - pad(s, 1);
                                    const auto ix = static_cast<std::int64_t>(ox * s.stride[0] + kx) - pad(s, 0);
                                    if (iz < 0 || iy < 0 || ix < 0 || iz >= static_cast<std::int64_t>(id[2]) ||
                                        iy >= static_cast<std::int64_t>(id[1]) ||
                                        ix >= static_cast<std::int64_t>(id[0])) {
                                        continue;
                                    }
                                    const auto wi = (((co * s.in_channels + ci) * s.kernel[2] + kz) * s.kernel[1] + ky) *
                                                        s.kernel[0] + kx;
                                    const auto p = (static_cast<std::size_t>(iz) * id[1] + static_cast<std::size_t>(iy)) * id[0] +
                                                   static_cast<std::size_t>(ix);
                                    acc += w[wi] * in(p, ci);
                                }
                    out((oz * od[1] + oy) * od[0] + ox, co) = acc;
                }
    }
}

void conv_backward_input(const ConvShape& s, const Matrix& grad_out, std::span<const double> w,
                         Matrix& grad_in) {
    check_conv(s, grad_in, s.in_channels, grad_out, s.out_channels);
    grad_in.fill(0.0);
    const auto od = s.out_dims();
    const auto& id = s.in_dims;
    for (std::size_t ci = 0; ci < s.in_channels; ++ci)
        for (std::size_t co = 0; co < s.out_channels; ++co)
            for (std::size_t oz = 0; oz < od[2]; ++oz)
                for (std::size_t oy = 0; oy < od[1]; ++oy)
                    for (std::size_t ox = 0; ox < od[0]; ++ox) {
                        const double g = grad_out((oz * od[1] + oy) * od[0] + ox, co);
                        for (std::size_t kz = 0; kz < s.kernel[2]; ++kz)
                            for (std::size_t ky = 0; ky < s.kernel[1]; ++ky)
                                for (std::size_t kx = 0; kx < s.kernel[0]; ++kx) {
                                    const auto iz = static_cast<std::int64_t>(oz * s.stride[2] + kz) - pad(s, 2);
                                    const auto iy = static_cast<std::int64_t>(oy * s.stride[1] + ky) - pad(s, 1);
                                    const auto ix = static_cast<std::int64_t>(ox * s.stride[0] + kx) - pad(s, 0);
                                    if (iz < 0 || iy < 0 || ix < 0 || iz >= static_cast<std::int64_t>(id[2]) ||
                                        iy >= static_cast<std::int64_t>(id[1]) ||
                                        ix >= static_cast<std::int64_t>(id[0])) {
                                        continue;
                                    }
                                    const auto wi = (((co * s.in_channels + ci) * s.kernel[2] + kz) * s.kernel[1] + ky) *
                                                        s.kernel[0] + kx;
                                    const auto p = (static_cast<std::size_t>(iz) * id[1] + static_cast<std::size_t>(iy)) * id[0] +
                                                   static_cast<std::size_t>(ix);
                                    grad_in(p, ci) += w[wi] * g;
                                }
                    }
}

void conv_backward_weights(const ConvShape& s, const Matrix& in, const Matrix& grad_out,
                           std::span<double> grad_w, std::span<double> grad_b) {
    check_conv(s, in, s.in_channels, grad_out, s.out_channels);
    if (grad_w.size() != s.weight_count() || grad_b.size() != s.out_channels) {
        throw ShapeError("conv_backward_weights: gradient buffers have wrong size");
    }
    const auto od = s.out_dims();
    const auto& id = s.in_dims;
    for (std::size_t co = 0; co < s.out_channels; ++co) {
        double gb = 0.0;
        for (std::size_t p = 0; p < s.out_voxels(); ++p) gb += grad_out(p, co);
        grad_b[co] = gb;
        for (std::size_t ci = 0; ci < s.in_channels; ++ci)
            for (std::size_t kz = 0; kz < s.kernel[2]; ++kz)
                for (std::size_t ky = 0; ky < s.kernel[1]; ++ky)
                    for (std::size_t kx = 0; kx < s.kernel[0]; ++kx) {
                        double acc = 0.0;
                        for (std::size_t oz = 0; oz < od[2]; ++oz)
                            for (std::size_t oy = 0; oy < od[1]; ++oy)
                                for (std::size_t ox = 0; ox < od[0]; ++ox) {
                                    const auto iz = static_cast<std::int64_t>(oz * s.stride[2] + kz) - pad(s, 2);
                                    const auto iy = static_cast<std::int64_t>(oy * s.stride[1] + ky) - pad(s, 1);
                                    const auto ix = static_cast<std::int64_t>(ox * s.stride[0] + kx) - pad(s, 0);
                                    if (iz < 0 || iy < 0 || ix < 0 || iz >= static_cast<std::int64_t>(id[2]) ||
                                        iy >= static_cast<std::int64_t>(id[1]) ||
                                        ix >= static_cast<std::int64_t>(id[0])) {
                                        continue;
                                    }
                                    const auto p = (static_cast<std::size_t>(iz) * id[1] + static_cast<std::size_t>(iy)) * id[0] +
                                                   static_cast<std::size_t>(ix);
                                    acc += in(p, ci) * grad_out((oz * od[1] + oy) * od[0] + ox, co);
                                }
                        grad_w[(((co * s.in_channels + ci) * s.kernel[2] + kz) * s.kernel[1] + ky) * s.kernel[0] + kx] = acc;
                    }
    }
}

}  // namespace ref
}  // namespace kinetica::kernels
