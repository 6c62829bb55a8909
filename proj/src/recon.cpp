#include "kinetica/recon.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <sstream>

#include "kinetica/error.hpp"
#include "kinetica/kernels.hpp"

namespace kinetica {

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::EMFilter: return "em";
        case Algorithm::KMRI: return "kmri";
        case Algorithm::DIPADMM: return "dip";
    }
    return "?";
}

Algorithm parse_algorithm(const std::string& s) {
    if (s == "em") return Algorithm::EMFilter;
    if (s == "kmri") return Algorithm::KMRI;
    if (s == "dip") return Algorithm::DIPADMM;
    throw ConfigError("unknown algorithm '" + s + "' (expected em, kmri or dip)");
}

namespace {

constexpr double kVFloor = 1e-12;

void check_same(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(what) + ": shape mismatch");
}

void validate_config(const ReconConfig& cfg) {
    if (cfg.n_outer < 1 || cfg.n_em_subiters < 1 || cfg.epochs < 0 || cfg.nested_subiters < 1 ||
        cfg.cg_iters < 1 || cfg.warm_iters < 1 || cfg.pretrain_epochs < 0)
        throw ConfigError("reconstruction counts must be positive");
    if (cfg.rho < 0.0 || !std::isfinite(cfg.rho)) throw ConfigError("rho must be >= 0 (0 selects the default)");
    if (!(cfg.rho_factor > 0.0)) throw ConfigError("rho_factor must be > 0");
    if (cfg.filter_fwhm < 0.0 || !std::isfinite(cfg.filter_fwhm)) throw ConfigError("filter_fwhm must be >= 0");
}

void validate_problem(const ReconProblem& prob) {
    if (!prob.model) throw ValidationError("reconstruction needs a system model");
    const auto& m = *prob.model;
    const std::size_t t = m.frames();
    if (prob.y.rows() != m.lors() || prob.y.cols() != t) throw ShapeError("measured data does not match the model");
    check_same(prob.y, prob.r, "randoms");
    if (prob.basis.frames() != t || prob.basis.a.cols() != 2) throw ShapeError("basis does not match the frame count");
    for (double v : prob.y.flat())
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("measured data must be finite and >= 0");
    for (double v : prob.r.flat())
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("randoms must be finite and >= 0");
}

// N x T times T x 2.
Matrix times_basis(const Matrix& x, const Matrix& a) {
    Matrix out(x.rows(), a.cols(), 0.0);
    for (std::size_t c = 0; c < a.cols(); ++c)
        for (std::size_t t = 0; t < x.cols(); ++t) axpy(a(t, c), x.col(t), out.col(c));
    return out;
}

// N x 2 times 2 x 2.
Matrix times_small(const Matrix& x, const double m[2][2]) {
    Matrix out(x.rows(), 2);
    for (std::size_t j = 0; j < x.rows(); ++j) {
        out(j, 0) = x(j, 0) * m[0][0] + x(j, 1) * m[1][0];
        out(j, 1) = x(j, 0) * m[0][1] + x(j, 1) * m[1][1];
    }
    return out;
}

bool wants_checkpoint(const ReconConfig& cfg, int iter) {
    return std::find(cfg.checkpoints.begin(), cfg.checkpoints.end(), iter) != cfg.checkpoints.end();
}

ParametricImage filtered(const Matrix& theta, const ImageGrid& grid, double fwhm) {
    return ParametricImage(grid, fwhm > 0.0 ? gaussian_filter(theta, grid, fwhm) : theta);
}

// Uniform nonnegative image per frame whose projection carries the net trues.
Matrix uniform_start(const ReconProblem& prob) {
    const auto& m = *prob.model;
    const auto& p = m.sensitivity();
    const auto& mask = m.lor_mask();
    Matrix v(m.voxels(), m.frames(), 0.0);
    for (std::size_t t = 0; t < m.frames(); ++t) {
        double counts = 0.0, sens = 0.0;
        for (std::size_t i = 0; i < m.lors(); ++i)
            if (mask[i]) counts += prob.y(i, t) - prob.r(i, t);
        for (double s : p.col(t)) sens += s;
        const double level = sens > 0.0 ? std::max(counts, 1e-6 * sens) / sens : 0.0;
        for (std::size_t j = 0; j < m.voxels(); ++j) v(j, t) = p(j, t) > 0.0 ? level : 0.0;
    }
    return v;
}

}  // namespace

// Building blocks -----------------------------------------------------------

Matrix em_scale_update(const SystemModel& model, const Matrix& r, const Matrix& y, const Matrix& v) {
    if (v.rows() != model.voxels() || v.cols() != model.frames()) throw ShapeError("em update: image shape");
    if (y.rows() != model.lors() || y.cols() != model.frames()) throw ShapeError("em update: data shape");
    check_same(y, r, "em update randoms");
    Matrix ratio = model.forward(v);
    const auto& mask = model.lor_mask();
    const std::size_t m = model.lors();
    for (std::size_t t = 0; t < ratio.cols(); ++t) {
        auto col = ratio.col(t);
        for (std::size_t i = 0; i < m; ++i) {
            const double ybar = col[i] + r(i, t);
            col[i] = (mask[i] && ybar > 0.0) ? y(i, t) / ybar : 0.0;
        }
    }
    Matrix out = model.backward(ratio);
    const auto& p = model.sensitivity();
    const std::size_t n = out.size();
    auto o = out.flat();
    const auto pv = p.flat();
    const auto vv = v.flat();
#pragma omp parallel for num_threads(kernels::thread_limit())
    for (std::size_t k = 0; k < n; ++k) o[k] = pv[k] > 0.0 ? vv[k] / pv[k] * o[k] : 0.0;
    return out;
}

namespace {

// Positive root of a v^2 + b v - c = 0 with a > 0, c >= 0, written to avoid
// cancellation in either sign of b.
double positive_root(double a, double b, double c) {
    const double disc = std::sqrt(b * b + 4.0 * a * c);
    if (b > 0.0) return 2.0 * c / (b + disc);
    return (disc - b) / (2.0 * a);
}

}  // namespace

double patlak_v_root(double vhat, double p, double c, double rho) {
    return positive_root(rho, p - rho * c, p * vhat);
}

Matrix patlak_v_update(const Matrix& vhat, const Matrix& p, const Matrix& f, const Matrix& mu, double rho) {
    check_same(vhat, p, "patlak v-update");
    check_same(vhat, f, "patlak v-update");
    check_same(vhat, mu, "patlak v-update");
    if (!(rho > 0.0)) throw ValidationError("rho must be > 0");
    Matrix out(vhat.rows(), vhat.cols());
    const std::size_t n = out.size();
    auto o = out.flat();
#pragma omp parallel for num_threads(kernels::thread_limit())
    for (std::size_t k = 0; k < n; ++k) {
        const double c = f.flat()[k] - mu.flat()[k];
        o[k] = patlak_v_root(vhat.flat()[k], p.flat()[k], c, rho);
    }
    return out;
}

Matrix relogan_v_update(const Matrix& vhat, const Matrix& p, const Matrix& vn, const Matrix& f, const Matrix& mu,
                        double rho) {
    check_same(vhat, p, "relogan v-update");
    check_same(vhat, vn, "relogan v-update");
    check_same(vhat, f, "relogan v-update");
    check_same(vhat, mu, "relogan v-update");
    if (!(rho > 0.0)) throw ValidationError("rho must be > 0");
    const std::size_t n = vhat.rows(), nt = vhat.cols();
    Matrix out(n, nt);
#pragma omp parallel for num_threads(kernels::thread_limit())
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> v(nt), cum(nt), tail_cum(nt), tail_c(nt);
        for (std::size_t t = 0; t < nt; ++t) v[t] = std::max(vn(j, t), kVFloor);
        double run = 0.0;
        for (std::size_t t = 0; t < nt; ++t) cum[t] = (run += v[t]);
        // Suffix sums over i >= t.
        double sc = 0.0, sd = 0.0;
        for (std::size_t t = nt; t-- > 0;) {
            sc += cum[t];
            sd += f(j, t) - mu(j, t);
            tail_cum[t] = sc;
            tail_c[t] = sd;
        }
        for (std::size_t t = 0; t < nt; ++t) {
            const double a = rho * (tail_cum[t] / v[t]);
            const double b = p(j, t) - rho * tail_c[t];
            out(j, t) = positive_root(a, b, p(j, t) * vhat(j, t));
        }
    }
    return out;
}

double em_surrogate(double v, double p, double vhat) {
    if (v <= 0.0) return vhat > 0.0 && p > 0.0 ? -std::numeric_limits<double>::infinity() : -p * v;
    return p * (vhat * std::log(v) - v);
}

double patlak_penalty(double v, double c, double rho) { return -0.5 * rho * (v - c) * (v - c); }

double relogan_surrogate(std::span<const double> v, std::span<const double> vn, std::span<const double> c,
                         double rho) {
    const std::size_t nt = v.size();
    if (vn.size() != nt || c.size() != nt) throw ShapeError("relogan surrogate: length mismatch");
    std::vector<double> base(nt);
    for (std::size_t t = 0; t < nt; ++t) base[t] = std::max(vn[t], kVFloor);
    double s = 0.0, cum = 0.0;
    for (std::size_t i = 0; i < nt; ++i) {
        cum += base[i];
        for (std::size_t t = 0; t <= i; ++t) {
            const double w = base[t] / cum;
            const double e = cum / base[t] * v[t] - c[i];
            s += w * e * e;
        }
    }
    return -0.5 * rho * s;
}

Matrix gaussian_filter(const Matrix& img, const ImageGrid& grid, double fwhm_mm) {
    if (img.rows() != grid.voxels()) throw ShapeError("filter: image does not match grid");
    if (fwhm_mm < 0.0 || !std::isfinite(fwhm_mm)) throw ValidationError("filter fwhm must be >= 0");
    Matrix out = img;
    if (fwhm_mm == 0.0) return out;
    const auto& d = grid.dims;
    std::vector<double> line;
    for (int axis = 0; axis < 3; ++axis) {
        const std::size_t len = d[axis];
        if (len < 2) continue;
        const double sigma = fwhm_mm / 2.3548 / grid.voxel_size[axis];
        const int radius = static_cast<int>(std::ceil(4.0 * sigma));
        if (radius < 1) continue;
        std::vector<double> w(2 * radius + 1);
        double wsum = 0.0;
        for (int k = -radius; k <= radius; ++k) wsum += (w[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma)));
        for (double& x : w) x /= wsum;
        const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d[0] : d[0] * d[1];
        const std::size_t n_lines = grid.voxels() / len;
        for (std::size_t c = 0; c < out.cols(); ++c) {
            auto col = out.col(c);
#pragma omp parallel for num_threads(kernels::thread_limit()) firstprivate(line)
            for (std::size_t l = 0; l < n_lines; ++l) {
                // Line start: decompose l over the two other axes.
                std::size_t start;
                if (axis == 0) start = l * d[0];
                else if (axis == 1) start = (l / d[0]) * d[0] * d[1] + l % d[0];
                else start = l;
                line.resize(len);
                for (std::size_t q = 0; q < len; ++q) line[q] = col[start + q * stride];
                for (std::size_t q = 0; q < len; ++q) {
                    double s = 0.0;
                    for (int k = -radius; k <= radius; ++k) {
                        const long idx = std::clamp<long>(static_cast<long>(q) + k, 0, static_cast<long>(len) - 1);
                        s += w[k + radius] * line[idx];
                    }
                    col[start + q * stride] = s;
                }
            }
        }
    }
    return out;
}

double default_rho(const Matrix& p, const Matrix& activity, double factor) {
    check_same(p, activity, "default rho");
    double sp = 0.0, sa = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p.flat()[k] <= 0.0) continue;
        sp += p.flat()[k];
        sa += activity.flat()[k];
        ++n;
    }
    if (n == 0 || !(sa > 0.0)) throw NumericalError("cannot derive rho: no activity on the sensitivity support");
    return factor * sp / sa;
}

Matrix kernel_ls_fit(const KernelMatrix& k, const TemporalBasis& basis, const Matrix& target, Matrix delta0,
                     int iterations, bool* converged) {
    const std::size_t n = k.size();
    if (target.rows() != n || target.cols() != basis.frames()) throw ShapeError("kernel fit: target shape");
    if (delta0.empty()) delta0 = Matrix(n, 2, 0.0);
    if (delta0.rows() != n || delta0.cols() != 2) throw ShapeError("kernel fit: delta shape");
    const Matrix& a = basis.a;
    double ata[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t t = 0; t < a.rows(); ++t)
        for (int c = 0; c < 2; ++c)
            for (int e = 0; e < 2; ++e) ata[c][e] += a(t, c) * a(t, e);
    // A^T A = L L^T. With delta = w L^{-1} the normal equations
    // K^T K delta A^T A = K^T T A become K^T K w = K^T T A L^{-T}, so the
    // temporal coupling drops out of the conjugate-gradient system.
    const double l00 = std::sqrt(ata[0][0]);
    if (!(l00 > 0.0)) throw NumericalError("kernel fit: basis column is zero");
    const double l10 = ata[1][0] / l00;
    const double d11 = ata[1][1] - l10 * l10;
    if (!(d11 > 1e-14 * ata[1][1])) throw NumericalError("kernel fit: basis columns are collinear");
    const double l11 = std::sqrt(d11);
    const double l[2][2] = {{l00, 0.0}, {l10, l11}};
    const double lti[2][2] = {{1.0 / l00, -l10 / (l00 * l11)}, {0.0, 1.0 / l11}};  // L^{-T}
    const double li[2][2] = {{lti[0][0], lti[1][0]}, {lti[0][1], lti[1][1]}};    // L^{-1}

    auto normal = [&](const Matrix& w) { return k.apply_transpose(k.apply(w)); };
    const Matrix b = times_small(k.apply_transpose(times_basis(target, a)), lti);
    Matrix x = times_small(delta0, l);  // w = delta L
    Matrix r = normal(x);
    for (std::size_t q = 0; q < r.size(); ++q) r.flat()[q] = b.flat()[q] - r.flat()[q];
    Matrix dir = r;
    double rr = dot(r.flat(), r.flat());
    const double tol = 1e-10 * std::max(norm2(b.flat()), 1e-300);
    bool ok = std::sqrt(rr) <= tol;
    for (int it = 0; it < iterations && !ok; ++it) {
        const Matrix hd = normal(dir);
        const double curv = dot(dir.flat(), hd.flat());
        if (!(curv > 0.0)) break;
        const double step = rr / curv;
        axpy(step, dir.flat(), x.flat());
        axpy(-step, hd.flat(), r.flat());
        const double rr_new = dot(r.flat(), r.flat());
        if (std::sqrt(rr_new) <= tol) ok = true;
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t q = 0; q < dir.size(); ++q) dir.flat()[q] = r.flat()[q] + beta * dir.flat()[q];
    }
    if (converged) *converged = ok;
    return times_small(x, li);
}

// Algorithms ----------------------------------------------------------------

ReconResult nested_em_filter(const ReconProblem& prob, const ReconConfig& cfg) {
    validate_problem(prob);
    validate_config(cfg);
    const auto& a = prob.basis.a;
    if (prob.basis.model != KineticModel::Patlak)
        throw ValidationError("nested EM applies to the Patlak model only; use kmri or dip");
    for (double e : a.flat())
        if (e < 0.0) throw ValidationError("nested EM needs a nonnegative basis; use kmri or dip for this model");
    const auto& m = *prob.model;
    const auto& p = m.sensitivity();
    const std::size_t n = m.voxels(), nt = m.frames();

    // Per-channel denominators sum_t p_jt A_tc.
    Matrix den(n, 2, 0.0);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t t = 0; t < nt; ++t) axpy(a(t, c), p.col(t), den.col(c));

    // Start: split the uniform image evenly between the two channels.
    const Matrix v0 = uniform_start(prob);
    Matrix theta(n, 2, 0.0);
    for (std::size_t c = 0; c < 2; ++c) {
        double mean_a = 0.0, mean_v = 0.0;
        for (std::size_t t = 0; t < nt; ++t) mean_a += a(t, c) / nt;
        for (double v : v0.flat()) mean_v += v / double(v0.size());
        const double level = mean_a > 0.0 ? 0.5 * mean_v / mean_a : 0.0;
        for (std::size_t j = 0; j < n; ++j) theta(j, c) = den(j, c) > 0.0 ? level : 0.0;
    }

    ReconResult res;
    Matrix x = apply_kinetic(theta, prob.basis);
    for (int it = 1; it <= cfg.n_outer; ++it) {
        const Matrix vhat = em_scale_update(m, prob.r, prob.y, x);
        for (int s = 0; s < cfg.nested_subiters; ++s) {
#pragma omp parallel for num_threads(kernels::thread_limit())
            for (std::size_t j = 0; j < n; ++j) {
                double num[2] = {0.0, 0.0};
                for (std::size_t t = 0; t < nt; ++t) {
                    const double xt = x(j, t);
                    if (xt <= 0.0) continue;
                    const double q = p(j, t) * vhat(j, t) / xt;
                    num[0] += q * a(t, 0);
                    num[1] += q * a(t, 1);
                }
                for (std::size_t c = 0; c < 2; ++c)
                    theta(j, c) = den(j, c) > 0.0 ? theta(j, c) * num[c] / den(j, c) : 0.0;
                for (std::size_t t = 0; t < nt; ++t) x(j, t) = theta(j, 0) * a(t, 0) + theta(j, 1) * a(t, 1);
            }
        }
        IterLog log;
        log.iter = it;
        log.loglik = log_likelihood(m, prob.r, prob.y, x);
        res.log.push_back(log);
        if (wants_checkpoint(cfg, it)) res.checkpoints.emplace_back(it, filtered(theta, m.grid(), cfg.filter_fwhm));
    }
    res.theta = filtered(theta, m.grid(), cfg.filter_fwhm);
    res.v = std::move(x);
    return res;
}

namespace {

// ADMM representation subproblem: f = output(), fitted toward a target.
class Representation {
public:
    virtual ~Representation() = default;
    virtual Matrix output() const = 0;      // N x T, on the constrained quantity
    virtual Matrix parametric() const = 0;  // N x 2
    virtual double fit(const Matrix& target, int epochs) = 0;
};

class KernelRep final : public Representation {
public:
    KernelRep(const KernelMatrix& k, TemporalBasis basis, int cg_iters)
        : k_(k), basis_(std::move(basis)), cg_iters_(cg_iters), delta_(k.size(), 2, 0.0) { refresh(); }

    Matrix output() const override { return out_; }
    Matrix parametric() const override { return theta_; }
    double fit(const Matrix& target, int) override {
        bool ok = true;
        delta_ = kernel_ls_fit(k_, basis_, target, std::move(delta_), cg_iters_, &ok);
        if (!ok) ++unconverged;
        refresh();
        double loss = 0.0;
        for (std::size_t q = 0; q < out_.size(); ++q) {
            const double e = out_.flat()[q] - target.flat()[q];
            loss += e * e;
        }
        return loss;
    }
    int unconverged = 0;

private:
    void refresh() {
        theta_ = k_.apply(delta_);
        out_ = apply_kinetic(theta_, basis_);
    }
    const KernelMatrix& k_;
    TemporalBasis basis_;
    int cg_iters_;
    Matrix delta_, theta_, out_;
};

class NetworkRep final : public Representation {
public:
    NetworkRep(const Network& net, std::vector<double> alpha) : net_(net), alpha_(std::move(alpha)) { refresh(); }

    Matrix output() const override { return out_.dynamic; }
    Matrix parametric() const override { return out_.parametric; }
    double fit(const Matrix& target, int epochs) override {
        auto tr = train_l2(net_, std::move(alpha_), target, static_cast<std::size_t>(epochs), {},
                           &memory_);
        alpha_ = std::move(tr.alpha);
        if (tr.line_search_failed) ++line_search_failures;
        refresh();
        return tr.loss;
    }
    const std::vector<double>& alpha() const { return alpha_; }
    int line_search_failures = 0;

private:
    void refresh() { out_ = net_.forward(alpha_); }
    LbfgsMemory memory_;
    const Network& net_;
    std::vector<double> alpha_;
    NetworkOutput out_;
};

ReconResult admm_loop(const ReconProblem& prob, const ReconConfig& cfg, Representation& rep, Matrix v,
                      double out_fwhm) {
    const auto& m = *prob.model;
    const auto& p = m.sensitivity();
    const bool cumulative = prob.basis.model == KineticModel::RELogan;
    const std::size_t n = m.voxels(), nt = m.frames();
    for (auto& e : v.flat()) e = std::max(e, 0.0);
    const double rho = cfg.rho > 0.0 ? cfg.rho : default_rho(p, v, cfg.rho_factor);

    ReconResult res;
    Matrix mu(n, nt, 0.0);
    Matrix f = rep.output();
    double min_resid = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= cfg.n_outer; ++it) {
        for (int s = 0; s < cfg.n_em_subiters; ++s) {
            const Matrix vhat = em_scale_update(m, prob.r, prob.y, v);
            v = cumulative ? relogan_v_update(vhat, p, v, f, mu, rho) : patlak_v_update(vhat, p, f, mu, rho);
        }
        const Matrix vb = cumulative ? cumulative_bin(v) : v;
        Matrix target = vb;
        axpy(1.0, mu.flat(), target.flat());
        IterLog log;
        log.iter = it;
        log.train_loss = rep.fit(target, cfg.epochs);
        f = rep.output();
        Matrix resid = vb;
        axpy(-1.0, f.flat(), resid.flat());
        axpy(1.0, resid.flat(), mu.flat());
        log.primal_residual = norm2(resid.flat());
        log.loglik = log_likelihood(m, prob.r, prob.y, v);
        res.log.push_back(log);
        if (wants_checkpoint(cfg, it)) res.checkpoints.emplace_back(it, filtered(rep.parametric(), m.grid(), out_fwhm));

        const double scale = norm2(target.flat());
        if (log.primal_residual > 10.0 * min_resid && log.primal_residual > 1e-6 * scale) {
            std::ostringstream os;
            os << "ADMM diverged at iteration " << it << ": primal residual " << log.primal_residual
               << " exceeds 10x its minimum " << min_resid;
            res.aborted = true;
            res.message = os.str();
            warn(res.message);
            break;
        }
        min_resid = std::min(min_resid, log.primal_residual);
    }
    res.theta = filtered(rep.parametric(), m.grid(), out_fwhm);
    res.v = std::move(v);
    return res;
}

// Dynamic-domain starting point and the matching target for the
// representation's warm fit (on the constrained quantity: x or vB).
struct WarmStart {
    Matrix v;
    Matrix target;
};

ReconResult direct_filter(const ReconProblem& prob, const ReconConfig& cfg);

WarmStart warm_start(const ReconProblem& prob, const ReconConfig& cfg) {
    ReconConfig wc = cfg;
    wc.n_outer = cfg.warm_iters;
    wc.checkpoints.clear();
    WarmStart w;
    if (prob.basis.model == KineticModel::Patlak) {
        auto em = nested_em_filter(prob, wc);
        w.target = apply_kinetic(em.theta.channels, prob.basis);
        w.v = w.target;
    } else {
        auto d = direct_filter(prob, wc);
        w.target = apply_kinetic(d.theta.channels, prob.basis);
        w.v = first_difference(w.target);
    }
    const double floor = 1e-6 * std::max(1e-300, std::abs(*std::max_element(w.v.flat().begin(), w.v.flat().end())));
    for (auto& e : w.v.flat()) e = std::max(e, floor);
    return w;
}

// Theta itself as the representation, filtered on output.
ReconResult direct_filter(const ReconProblem& prob, const ReconConfig& cfg) {
    const auto& m = *prob.model;
    const auto id = KernelMatrix::identity(m.voxels());
    KernelRep rep(id, prob.basis, cfg.cg_iters);
    Matrix v = uniform_start(prob);
    rep.fit(prob.basis.model == KineticModel::RELogan ? cumulative_bin(v) : v, 0);
    return admm_loop(prob, cfg, rep, std::move(v), cfg.filter_fwhm);
}

}  // namespace

ReconResult kmri(const ReconProblem& prob, const ReconConfig& cfg) {
    validate_problem(prob);
    validate_config(cfg);
    if (!prob.kernel) throw ValidationError("kmri needs a kernel matrix");
    if (prob.kernel->size() != prob.model->voxels()) throw ShapeError("kernel does not match the grid");
    auto w = warm_start(prob, cfg);
    KernelRep rep(*prob.kernel, prob.basis, cfg.cg_iters);
    rep.fit(w.target, 0);
    auto res = admm_loop(prob, cfg, rep, std::move(w.v), 0.0);
    if (rep.unconverged > 0)
        warn("kmri: conjugate gradients stopped before tolerance in " + std::to_string(rep.unconverged) +
             " of " + std::to_string(res.log.size() + 1) + " solves; kept the last iterate");
    return res;
}

ReconResult dip_admm(const ReconProblem& prob, const ReconConfig& cfg) {
    validate_problem(prob);
    validate_config(cfg);
    if (!prob.prior) throw ValidationError("dip needs a prior image");
    const auto& m = *prob.model;
    if (prob.network.use_kernel_layer && !prob.kernel) throw ValidationError("kernel layer enabled without a kernel matrix");
    auto w = warm_start(prob, cfg);
    NetworkSpec spec = prob.network;
    spec.parametric_scale = parametric_scale_for(w.target, prob.basis);
    Network net(spec, m.grid(), *prob.prior, spec.use_kernel_layer ? prob.kernel : nullptr, prob.basis);
    auto alpha = net.init_params(cfg.seed);
    if (cfg.pretrain && cfg.pretrain_epochs > 0)
        alpha = pretrain(net, std::move(alpha), w.target, static_cast<std::size_t>(cfg.pretrain_epochs)).alpha;
    NetworkRep rep(net, std::move(alpha));
    auto res = admm_loop(prob, cfg, rep, std::move(w.v), 0.0);
    if (rep.line_search_failures > 0)
        warn("dip: line search failed in " + std::to_string(rep.line_search_failures) + " training loops");
    return res;
}

ReconResult reconstruct(const ReconProblem& prob, const ReconConfig& cfg) {
    switch (cfg.algorithm) {
        case Algorithm::EMFilter:
            if (prob.basis.model == KineticModel::RELogan) {
                validate_problem(prob);
                validate_config(cfg);
                return direct_filter(prob, cfg);
            }
            return nested_em_filter(prob, cfg);
        case Algorithm::KMRI: return kmri(prob, cfg);
        case Algorithm::DIPADMM: return dip_admm(prob, cfg);
    }
    throw ConfigError("unknown algorithm");
}

}  // namespace kinetica
