#include "kinetica/netrep.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <sstream>

#include "kinetica/error.hpp"
#include "kinetica/volume_io.hpp"

namespace kinetica {

std::string to_string(Backbone b) {
    switch (b) {
        case Backbone::UNet: return "unet";
        case Backbone::Direct: return "direct";
        case Backbone::Linear: return "linear";
    }
    return "unet";
}

Backbone parse_backbone(const std::string& s) {
    if (s == "unet") return Backbone::UNet;
    if (s == "direct") return Backbone::Direct;
    if (s == "linear") return Backbone::Linear;
    throw ConfigError("unknown backbone '" + s + "' (expected unet, direct or linear)");
}

std::string NetworkSpec::serialize() const {
    std::ostringstream ss;
    ss.precision(17);
    ss << "backbone=" << to_string(backbone) << ";n_scales=" << n_scales << ";base_channels=" << base_channels
       << ";conv_kernel=" << conv_kernel << ";leaky_slope=" << leaky_slope
       << ";kernel_layer=" << (use_kernel_layer ? 1 : 0) << ";kernel_layer_position=" << kernel_layer_position
       << ";tail_blocks=" << tail_blocks << ";rectify=" << (rectify_output ? 1 : 0)
       << ";scale=" << parametric_scale[0] << ',' << parametric_scale[1];
    return ss.str();
}

std::uint64_t NetworkSpec::hash() const { return fnv1a64(serialize()); }

namespace {

std::array<std::size_t, 3> halve(const std::array<std::size_t, 3>& d) {
    std::array<std::size_t, 3> out{};
    for (int a = 0; a < 3; ++a) out[a] = d[a] > 1 ? (d[a] + 1) / 2 : 1;
    return out;
}

std::size_t volume(const std::array<std::size_t, 3>& d) { return d[0] * d[1] * d[2]; }

void add_into(Matrix& dst, const Matrix& src) {
    if (dst.size() == 0) {
        dst = src;
        return;
    }
    auto d = dst.flat();
    auto s = src.flat();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
}

}  // namespace

int Network::add_conv(const std::string& name, int in_slot, std::array<std::size_t, 3> dims, std::size_t cin,
                      std::size_t cout, std::size_t k, std::size_t stride, bool activate) {
    Op op;
    op.kind = Op::Conv;
    op.activate = activate;
    op.shape.in_dims = dims;
    op.shape.in_channels = cin;
    op.shape.out_channels = cout;
    for (int a = 0; a < 3; ++a) {
        op.shape.kernel[a] = dims[a] > 1 ? k : 1;
        op.shape.stride[a] = dims[a] > 1 ? stride : 1;
    }
    LayerSlice ls;
    ls.name = name;
    ls.weight_offset = n_params_;
    ls.weight_count = op.shape.weight_count();
    ls.bias_offset = n_params_ + ls.weight_count;
    ls.bias_count = cout;
    ls.fan_in = cin * op.shape.taps();
    n_params_ += ls.weight_count + ls.bias_count;
    op.layer = static_cast<int>(layout_.size());
    layout_.push_back(ls);
    op.a = in_slot;
    op.out = new_slot();
    slot_dims_.push_back(op.shape.out_dims());
    ops_.push_back(op);
    return op.out;
}

Network::Network(NetworkSpec spec, ImageGrid grid, const PriorImage& z, const KernelMatrix* kernel,
                 TemporalBasis basis)
    : spec_(std::move(spec)), grid_(grid), kernel_(kernel), basis_(std::move(basis)) {
    const std::size_t n = grid_.voxels();
    if (!(z.grid == grid_)) throw ShapeError("network prior image is on a different grid");
    if (spec_.use_kernel_layer && (kernel_ == nullptr || kernel_->size() != n)) {
        throw ShapeError("kernel layer requested without a kernel matrix for this grid");
    }
    if (basis_.a.cols() != 2) throw ShapeError("kinetic basis must have two columns");
    if (spec_.conv_kernel % 2 == 0) throw ValidationError("conv_kernel must be odd");
    if (!(spec_.leaky_slope >= 0.0 && spec_.leaky_slope < 1.0)) throw ValidationError("leaky_slope must lie in [0, 1)");

    // Standardized prior as network input.
    double mean = 0.0;
    for (double v : z.data) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : z.data) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    input_ = Matrix(n, 1);
    for (std::size_t j = 0; j < n; ++j) input_(j, 0) = sd > 0 ? (z.data[j] - mean) / sd : z.data[j] - mean;

    const auto d0 = grid_.dims;
    const int in = new_slot();
    slot_dims_.push_back(d0);

    auto add_kernel = [&](int slot) {
        Op op;
        op.kind = Op::Kernel;
        op.a = slot;
        op.out = new_slot();
        slot_dims_.push_back(d0);
        ops_.push_back(op);
        return op.out;
    };

    switch (spec_.backbone) {
        case Backbone::Direct: {
            LayerSlice ls;
            ls.name = "theta";
            ls.weight_count = 2 * n;
            ls.fan_in = 1;
            layout_.push_back(ls);
            n_params_ = 2 * n;
            raw_slot_ = spec_.use_kernel_layer ? add_kernel(in) : in;
            break;
        }
        case Backbone::Linear: {
            int cur = add_conv("out", in, d0, 1, 2, 1, 1, false);
            raw_slot_ = spec_.use_kernel_layer ? add_kernel(cur) : cur;
            break;
        }
        case Backbone::UNet: {
            if (spec_.n_scales < 1) throw ValidationError("n_scales must be >= 1");
            if (spec_.base_channels < 1) throw ValidationError("base_channels must be >= 1");
            if (spec_.tail_blocks < 0) throw ValidationError("tail_blocks must be >= 0");
            if (spec_.kernel_layer_position < 0 || spec_.kernel_layer_position > spec_.tail_blocks) {
                throw ValidationError("kernel_layer_position must lie in [0, tail_blocks]");
            }
            const auto k = spec_.conv_kernel;
            const int s_count = spec_.n_scales;
            std::vector<std::array<std::size_t, 3>> dims{d0};
            std::vector<std::size_t> ch{spec_.base_channels};
            for (int s = 1; s < s_count; ++s) {
                dims.push_back(halve(dims.back()));
                ch.push_back(ch.back() * 2);
            }
            std::vector<int> enc(s_count);
            int cur = add_conv("enc0a", in, d0, 1, ch[0], k, 1, true);
            cur = add_conv("enc0b", cur, d0, ch[0], ch[0], k, 1, true);
            enc[0] = cur;
            for (int s = 1; s < s_count; ++s) {
                cur = add_conv("down" + std::to_string(s), cur, dims[s - 1], ch[s - 1], ch[s], k, 2, true);
                cur = add_conv("enc" + std::to_string(s) + "b", cur, dims[s], ch[s], ch[s], k, 1, true);
                enc[s] = cur;
            }
            for (int s = s_count - 2; s >= 0; --s) {
                Op up;
                up.kind = Op::Up;
                up.a = cur;
                up.coarse = dims[s + 1];
                up.fine = dims[s];
                up.out = new_slot();
                slot_dims_.push_back(dims[s]);
                ops_.push_back(up);
                cur = add_conv("up" + std::to_string(s), up.out, dims[s], ch[s + 1], ch[s], k, 1, true);
                Op cat;
                cat.kind = Op::Concat;
                cat.a = cur;
                cat.b = enc[s];
                cat.out = new_slot();
                slot_dims_.push_back(dims[s]);
                ops_.push_back(cat);
                cur = add_conv("dec" + std::to_string(s), cat.out, dims[s], 2 * ch[s], ch[s], k, 1, true);
            }
            for (int b = 0; b <= spec_.tail_blocks; ++b) {
                if (spec_.use_kernel_layer && b == spec_.kernel_layer_position) cur = add_kernel(cur);
                if (b < spec_.tail_blocks) cur = add_conv("tail" + std::to_string(b), cur, d0, ch[0], ch[0], k, 1, true);
            }
            raw_slot_ = add_conv("out", cur, d0, ch[0], 2, 1, 1, false);
            break;
        }
    }
}

void Network::set_basis(TemporalBasis basis) {
    if (basis.a.cols() != 2) throw ShapeError("kinetic basis must have two columns");
    basis_ = std::move(basis);
}

std::vector<double> Network::init_params(std::uint64_t seed, InitMode mode) const {
    std::vector<double> alpha(n_params_, 0.0);
    if (mode == InitMode::Zero) return alpha;
    std::mt19937_64 rng(seed);
    const double gain = 6.0 / (1.0 + spec_.leaky_slope * spec_.leaky_slope);
    for (const auto& ls : layout_) {
        const double bound = std::sqrt(gain / static_cast<double>(std::max<std::size_t>(ls.fan_in, 1)));
        for (std::size_t k = 0; k < ls.weight_count; ++k) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            alpha[ls.weight_offset + k] = (2.0 * u - 1.0) * bound;
        }
    }
    return alpha;
}

NetworkOutput Network::forward(const std::vector<double>& alpha, Tape* tape) const {
    if (alpha.size() != n_params_) throw ShapeError("parameter vector has the wrong length");
    const std::size_t n = grid_.voxels();
    std::vector<Matrix> slots(static_cast<std::size_t>(n_slots_));
    if (spec_.backbone == Backbone::Direct) {
        slots[0] = Matrix(n, 2, std::vector<double>(alpha.begin(), alpha.end()));
    } else {
        slots[0] = input_;
    }
    for (const auto& op : ops_) {
        auto& out = slots[static_cast<std::size_t>(op.out)];
        const auto& a = slots[static_cast<std::size_t>(op.a)];
        switch (op.kind) {
            case Op::Conv: {
                const auto& ls = layout_[static_cast<std::size_t>(op.layer)];
                out = Matrix(op.shape.out_voxels(), op.shape.out_channels);
                kernels::par::conv_forward(op.shape, a, {alpha.data() + ls.weight_offset, ls.weight_count},
                                           {alpha.data() + ls.bias_offset, ls.bias_count}, out);
                if (op.activate) {
                    const double slope = spec_.leaky_slope;
                    for (double& v : out.flat()) v = v > 0 ? v : slope * v;
                }
                break;
            }
            case Op::Up: {
                const auto& f = op.fine;
                const auto& c = op.coarse;
                out = Matrix(volume(f), a.cols());
                for (std::size_t ch = 0; ch < a.cols(); ++ch) {
                    auto src = a.col(ch);
                    auto dst = out.col(ch);
                    for (std::size_t z = 0; z < f[2]; ++z) {
                        const std::size_t cz = c[2] > 1 ? z / 2 : 0;
                        for (std::size_t y = 0; y < f[1]; ++y) {
                            const std::size_t cy = c[1] > 1 ? y / 2 : 0;
                            const std::size_t drow = (z * f[1] + y) * f[0];
                            const std::size_t srow = (cz * c[1] + cy) * c[0];
                            for (std::size_t x = 0; x < f[0]; ++x) dst[drow + x] = src[srow + (c[0] > 1 ? x / 2 : 0)];
                        }
                    }
                }
                break;
            }
            case Op::Concat: {
                const auto& b = slots[static_cast<std::size_t>(op.b)];
                out = Matrix(a.rows(), a.cols() + b.cols());
                std::copy(a.flat().begin(), a.flat().end(), out.flat().begin());
                std::copy(b.flat().begin(), b.flat().end(), out.flat().begin() + static_cast<long>(a.size()));
                break;
            }
            case Op::Kernel: out = kernel_->apply(a); break;
        }
    }
    Matrix raw = slots[static_cast<std::size_t>(raw_slot_)];
    NetworkOutput res;
    res.parametric = Matrix(n, 2);
    for (std::size_t c = 0; c < 2; ++c) {
        auto r = raw.col(c);
        auto p = res.parametric.col(c);
        const double s = spec_.parametric_scale[c];
        for (std::size_t j = 0; j < n; ++j) p[j] = s * (spec_.rectify_output ? std::max(0.0, r[j]) : r[j]);
    }
    res.dynamic = apply_kinetic(res.parametric, basis_);
    if (tape != nullptr) {
        tape->raw = std::move(raw);
        tape->slots = std::move(slots);
        tape->valid = true;
    }
    return res;
}

std::vector<double> Network::backward(const std::vector<double>& alpha, const Tape& tape, const Matrix& grad_dynamic,
                                      const Matrix& grad_parametric) const {
    if (!tape.valid) throw ValidationError("backward called without a cached forward pass");
    if (alpha.size() != n_params_) throw ShapeError("parameter vector has the wrong length");
    const std::size_t n = grid_.voxels();
    const std::size_t t_count = basis_.frames();
    if (grad_dynamic.rows() != n || grad_dynamic.cols() != t_count) throw ShapeError("grad_dynamic has the wrong shape");
    const bool has_gp = grad_parametric.size() > 0;
    if (has_gp && (grad_parametric.rows() != n || grad_parametric.cols() != 2)) {
        throw ShapeError("grad_parametric has the wrong shape");
    }

    // Kinetic layer: d<theta A^T, G>/d theta = G A.
    Matrix g_raw(n, 2, 0.0);
    for (std::size_t c = 0; c < 2; ++c) {
        auto gr = g_raw.col(c);
        for (std::size_t t = 0; t < t_count; ++t) {
            const double a = basis_.a(t, c);
            if (a == 0.0) continue;
            auto gd = grad_dynamic.col(t);
            for (std::size_t j = 0; j < n; ++j) gr[j] += gd[j] * a;
        }
        if (has_gp) {
            auto gp = grad_parametric.col(c);
            for (std::size_t j = 0; j < n; ++j) gr[j] += gp[j];
        }
        auto r = tape.raw.col(c);
        const double s = spec_.parametric_scale[c];
        for (std::size_t j = 0; j < n; ++j) {
            gr[j] *= s;
            if (spec_.rectify_output && !(r[j] > 0.0)) gr[j] = 0.0;
        }
    }

    std::vector<double> grad(n_params_, 0.0);
    std::vector<Matrix> g(static_cast<std::size_t>(n_slots_));
    g[static_cast<std::size_t>(raw_slot_)] = std::move(g_raw);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        const auto& op = *it;
        Matrix& go = g[static_cast<std::size_t>(op.out)];
        if (go.size() == 0) continue;
        const auto& a = tape.slots[static_cast<std::size_t>(op.a)];
        switch (op.kind) {
            case Op::Conv: {
                if (op.activate) {
                    const auto& out = tape.slots[static_cast<std::size_t>(op.out)];
                    auto gv = go.flat();
                    auto ov = out.flat();
                    const double slope = spec_.leaky_slope;
                    for (std::size_t k = 0; k < gv.size(); ++k) {
                        if (!(ov[k] > 0)) gv[k] *= slope;
                    }
                }
                const auto& ls = layout_[static_cast<std::size_t>(op.layer)];
                kernels::par::conv_backward_weights(op.shape, a, go, {grad.data() + ls.weight_offset, ls.weight_count},
                                                    {grad.data() + ls.bias_offset, ls.bias_count});
                if (op.a != 0 || spec_.backbone == Backbone::Direct) {
                    Matrix gi(op.shape.in_voxels(), op.shape.in_channels);
                    kernels::par::conv_backward_input(op.shape, go, {alpha.data() + ls.weight_offset, ls.weight_count},
                                                      gi);
                    add_into(g[static_cast<std::size_t>(op.a)], gi);
                }
                break;
            }
            case Op::Up: {
                const auto& f = op.fine;
                const auto& c = op.coarse;
                Matrix gi(volume(c), a.cols(), 0.0);
                for (std::size_t ch = 0; ch < a.cols(); ++ch) {
                    auto src = go.col(ch);
                    auto dst = gi.col(ch);
                    for (std::size_t z = 0; z < f[2]; ++z) {
                        const std::size_t cz = c[2] > 1 ? z / 2 : 0;
                        for (std::size_t y = 0; y < f[1]; ++y) {
                            const std::size_t cy = c[1] > 1 ? y / 2 : 0;
                            const std::size_t frow = (z * f[1] + y) * f[0];
                            const std::size_t crow = (cz * c[1] + cy) * c[0];
                            for (std::size_t x = 0; x < f[0]; ++x) dst[crow + (c[0] > 1 ? x / 2 : 0)] += src[frow + x];
                        }
                    }
                }
                add_into(g[static_cast<std::size_t>(op.a)], gi);
                break;
            }
            case Op::Concat: {
                const std::size_t na = a.size();
                const auto& b = tape.slots[static_cast<std::size_t>(op.b)];
                Matrix ga(a.rows(), a.cols()), gb(b.rows(), b.cols());
                std::copy(go.flat().begin(), go.flat().begin() + static_cast<long>(na), ga.flat().begin());
                std::copy(go.flat().begin() + static_cast<long>(na), go.flat().end(), gb.flat().begin());
                add_into(g[static_cast<std::size_t>(op.a)], ga);
                add_into(g[static_cast<std::size_t>(op.b)], gb);
                break;
            }
            case Op::Kernel: add_into(g[static_cast<std::size_t>(op.a)], kernel_->apply_transpose(go)); break;
        }
        go = Matrix();
    }
    if (spec_.backbone == Backbone::Direct && g[0].size() > 0) {
        std::copy(g[0].flat().begin(), g[0].flat().end(), grad.begin());
    }
    return grad;
}

std::array<double, 2> parametric_scale_for(const Matrix& target, const TemporalBasis& basis) {
    double mt = 0.0;
    for (double v : target.flat()) mt += v;
    mt /= static_cast<double>(std::max<std::size_t>(target.size(), 1));
    std::array<double, 2> s{1.0, 1.0};
    for (std::size_t c = 0; c < 2; ++c) {
        double ma = 0.0;
        for (std::size_t t = 0; t < basis.frames(); ++t) ma += std::abs(basis.a(t, c));
        ma /= static_cast<double>(std::max<std::size_t>(basis.frames(), 1));
        s[c] = (ma > 0.0 && mt > 0.0) ? mt / ma : 1.0;
    }
    return s;
}

// ---------------------------------------------------------------------------
// L-BFGS

namespace {

double dotv(const std::vector<double>& a, const std::vector<double>& b) { return dot(a, b); }

double cubic_min(double x1, double f1, double g1, double x2, double f2, double g2, double lo, double hi) {
    const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    const double d2sq = d1 * d1 - g1 * g2;
    if (d2sq >= 0.0) {
        const double d2 = std::sqrt(d2sq);
        double m;
        if (x1 <= x2) {
            m = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2));
        } else {
            m = x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
        }
        if (std::isfinite(m)) return std::clamp(m, lo, hi);
    }
    return 0.5 * (lo + hi);
}

struct Point {
    double t = 0.0, f = 0.0, dg = 0.0;
    std::vector<double> g;
};

}  // namespace

TrainResult lbfgs_minimize(const Objective& fun, std::vector<double> x, std::size_t iterations,
                           const LbfgsOptions& opt, LbfgsMemory* memory) {
    TrainResult res;
    const std::size_t n = x.size();
    std::vector<double> g(n);
    double fx = fun(x, g);
    res.evaluations = 1;
    res.initial_loss = fx;
    if (!std::isfinite(fx)) throw NumericalError("objective is not finite at the starting point");

    LbfgsMemory local;
    LbfgsMemory& mem = memory ? *memory : local;
    if (!mem.s.empty() && mem.s.front().size() != n) mem.clear();
    auto& s_hist = mem.s;
    auto& y_hist = mem.y;
    auto& rho_hist = mem.rho;
    std::vector<double> d(n), xt(n);

    for (std::size_t it = 0; it < iterations; ++it) {
        double gmax = 0.0;
        for (double v : g) gmax = std::max(gmax, std::abs(v));
        if (gmax == 0.0 || gmax <= opt.grad_tol) break;

        // Two-loop recursion.
        d = g;
        std::vector<double> alpha_k(s_hist.size());
        for (std::size_t k = s_hist.size(); k-- > 0;) {
            alpha_k[k] = rho_hist[k] * dotv(s_hist[k], d);
            axpy(-alpha_k[k], y_hist[k], d);
        }
        double gamma = 1.0;
        if (!s_hist.empty()) gamma = dotv(s_hist.back(), y_hist.back()) / dotv(y_hist.back(), y_hist.back());
        for (double& v : d) v *= gamma;
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double beta = rho_hist[k] * dotv(y_hist[k], d);
            axpy(alpha_k[k] - beta, s_hist[k], d);
        }
        for (double& v : d) v = -v;
        double dg0 = dotv(g, d);
        if (!(dg0 < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            for (std::size_t k = 0; k < n; ++k) d[k] = -g[k];
            dg0 = -dotv(g, g);
        }
        double t_init = 1.0;
        if (s_hist.empty()) {
            double g1 = 0.0;
            for (double v : g) g1 += std::abs(v);
            t_init = std::min(1.0, 1.0 / g1);
        }

        const double f0 = fx;
        int evals_left = opt.max_line_evals;
        double max_change = 0.0;  // largest |f - f0| seen along the line
        auto eval = [&](double t) {
            Point p;
            p.t = t;
            p.g.resize(n);
            for (std::size_t k = 0; k < n; ++k) xt[k] = x[k] + t * d[k];
            p.f = fun(xt, p.g);
            p.dg = dotv(p.g, d);
            if (std::isfinite(p.f)) max_change = std::max(max_change, std::abs(p.f - f0));
            else max_change = std::numeric_limits<double>::infinity();
            ++res.evaluations;
            --evals_left;
            return p;
        };

        bool found = false;
        Point accepted;
        Point prev{0.0, f0, dg0, g};
        double t = t_init;
        Point lo, hi;
        bool zoom = false;
        for (int i = 0; evals_left > 0; ++i) {
            Point cur = eval(t);
            if (!std::isfinite(cur.f) || cur.f > f0 + opt.c1 * t * dg0 || (i > 0 && cur.f >= prev.f)) {
                lo = prev;
                hi = cur;
                zoom = true;
                break;
            }
            if (std::abs(cur.dg) <= -opt.c2 * dg0) {
                accepted = std::move(cur);
                found = true;
                break;
            }
            if (cur.dg >= 0.0) {
                lo = std::move(cur);
                hi = prev;
                zoom = true;
                break;
            }
            prev = std::move(cur);
            t = 2.0 * prev.t;
        }
        while (zoom && !found && evals_left > 0) {
            const double a = std::min(lo.t, hi.t), b = std::max(lo.t, hi.t);
            const double width = b - a;
            if (width <= 1e-16 * std::max(1.0, b)) break;
            double tt = std::isfinite(hi.f) ? cubic_min(lo.t, lo.f, lo.dg, hi.t, hi.f, hi.dg, a, b) : 0.5 * (a + b);
            const double margin = 0.1 * width;
            if (tt < a + margin || tt > b - margin) tt = 0.5 * (a + b);
            Point cur = eval(tt);
            if (!std::isfinite(cur.f) || cur.f > f0 + opt.c1 * tt * dg0 || cur.f >= lo.f) {
                hi = std::move(cur);
            } else {
                if (std::abs(cur.dg) <= -opt.c2 * dg0) {
                    accepted = std::move(cur);
                    found = true;
                    break;
                }
                if (cur.dg * (hi.t - lo.t) >= 0.0) hi = lo;
                lo = std::move(cur);
            }
        }
        if (!found && zoom && lo.t > 0.0 && lo.f < f0) {
            // Sufficient decrease holds at lo even though curvature does not.
            accepted = std::move(lo);
            found = true;
        }
        if (!found) {
            // Every trial within rounding of f0: converged to working precision.
            if (max_change > 1e-13 * std::max(std::abs(f0), 1e-300)) res.line_search_failed = true;
            break;
        }

        std::vector<double> s(n), y(n);
        for (std::size_t k = 0; k < n; ++k) {
            s[k] = accepted.t * d[k];
            y[k] = accepted.g[k] - g[k];
            x[k] += s[k];
        }
        g = std::move(accepted.g);
        fx = accepted.f;
        const double sy = dotv(s, y);
        if (sy > 1e-12 * std::sqrt(dotv(s, s) * dotv(y, y))) {
            if (s_hist.size() == opt.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
        }
        ++res.iterations;
        res.loss_history.push_back(fx);
    }
    res.alpha = std::move(x);
    res.loss = fx;
    if (res.line_search_failed) warn("L-BFGS line search failed; returning the best point found");
    return res;
}

TrainResult train_l2(const Network& net, std::vector<double> alpha0, const Matrix& target, std::size_t epochs,
                     const LbfgsOptions& opt, LbfgsMemory* memory) {
    const std::size_t n = net.grid().voxels();
    if (target.rows() != n || target.cols() != net.basis().frames()) throw ShapeError("training target has the wrong shape");
    if (!all_finite(target.flat())) throw ValidationError("training target must be finite");
    Objective f = [&](const std::vector<double>& a, std::vector<double>& grad) {
        Tape tape;
        auto out = net.forward(a, &tape);
        Matrix r(n, target.cols());
        double loss = 0.0;
        for (std::size_t k = 0; k < r.size(); ++k) {
            const double e = out.dynamic.flat()[k] - target.flat()[k];
            r.flat()[k] = 2.0 * e;
            loss += e * e;
        }
        grad = net.backward(a, tape, r);
        return loss;
    };
    return lbfgs_minimize(f, std::move(alpha0), epochs, opt, memory);
}

TrainResult pretrain(const Network& net, std::vector<double> alpha0, const Matrix& warm_target, std::size_t epochs,
                     const LbfgsOptions& opt) {
    return train_l2(net, std::move(alpha0), warm_target, epochs, opt);
}

void write_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const std::vector<double>& alpha) {
    const auto h = spec.hash();
    std::vector<double> v;
    v.reserve(alpha.size() + 2);
    v.push_back(static_cast<double>(h >> 32));
    v.push_back(static_cast<double>(h & 0xffffffffULL));
    v.insert(v.end(), alpha.begin(), alpha.end());
    write_vector(path, v);
}

std::vector<double> read_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec) {
    auto v = read_vector(path);
    if (v.size() < 2) throw FormatError(path.string() + ": checkpoint too short");
    const auto h = (static_cast<std::uint64_t>(v[0]) << 32) | static_cast<std::uint64_t>(v[1]);
    if (h != spec.hash()) throw FormatError(path.string() + ": checkpoint was written for a different network spec");
    return {v.begin() + 2, v.end()};
}

}  // namespace kinetica
