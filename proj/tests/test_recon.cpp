#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "kinetica/error.hpp"
#include "kinetica/recon.hpp"
#include "kinetica/simulate.hpp"
#include "support.hpp"

using namespace kinetica;

namespace {

// Golden-section search for the maximizer of a concave function on [lo, hi].
// `better(a, b)` is F(a) - F(b) computed without cancellation, so the search
// resolves the peak to a few ulps instead of sqrt(eps).
double golden_max(const std::function<double(double, double)>& diff, double lo, double hi) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    for (int it = 0; it < 2000 && b - a > 1e-15 * b; ++it) {
        if (diff(x1, x2) > 0.0) {
            b = x2;
            x2 = x1;
            x1 = b - g * (b - a);
        } else {
            a = x1;
            x1 = x2;
            x2 = a + g * (b - a);
        }
    }
    return 0.5 * (a + b);
}

// phi(v) - phi(w) for phi = p (vhat log v - v).
double phi_diff(double v, double w, double p, double vhat) {
    return p * vhat * std::log1p((v - w) / w) - p * (v - w);
}

struct TinyProblem {
    ImageGrid grid = ImageGrid::planar(12, 12, 2.0, 2.0);
    FrameSchedule schedule{{{1800, 2400}, {2400, 3000}, {3000, 3600}}, 1800};
    SystemModel model;
    TemporalBasis basis;
    Matrix theta;  // truth
    Matrix x;
    Matrix r, y;
    PriorImage prior;
};

TinyProblem tiny_problem(double counts = 2e5) {
    TinyProblem tp;
    auto cp = feng_input(FengParams{}, 3600.0);
    tp.basis = patlak_basis(cp, tp.schedule);
    tp.theta = Matrix(tp.grid.voxels(), 2, 0.0);
    std::vector<double> z(tp.grid.voxels(), 0.0);
    for (std::size_t yy = 0; yy < 12; ++yy)
        for (std::size_t xx = 0; xx < 12; ++xx) {
            const double dx = xx - 5.5, dy = yy - 5.5, r2 = dx * dx + dy * dy;
            const auto j = tp.grid.index(xx, yy);
            if (r2 < 2.5 * 2.5) {
                tp.theta(j, 0) = 5e-4, tp.theta(j, 1) = 0.4, z[j] = 0.55;
            } else if (r2 < 5.5 * 5.5) {
                tp.theta(j, 0) = 1.7e-4, tp.theta(j, 1) = 0.3, z[j] = 1.0;
            }
        }
    tp.prior = PriorImage(tp.grid, z);
    tp.x = apply_kinetic(tp.theta, tp.basis);
    SystemModel unit(tp.grid, ParallelBeamGeometry{18, 20, 2.0}, {1.0, 1.0, 1.0});
    double total = 0.0;
    for (double v : unit.forward(tp.x).flat()) total += v;
    tp.model = unit.scaled(counts / total);
    auto trues = tp.model.forward(tp.x);
    const double rlevel = 0.2 * counts / double(trues.size());
    tp.r = Matrix(trues.rows(), trues.cols(), 0.0);
    for (std::size_t i = 0; i < trues.rows(); ++i)
        for (std::size_t t = 0; t < trues.cols(); ++t) tp.r(i, t) = tp.model.lor_mask()[i] ? rlevel : 0.0;
    tp.y = trues;
    axpy(1.0, tp.r.flat(), tp.y.flat());
    return tp;
}

ReconProblem as_problem(const TinyProblem& tp) {
    ReconProblem p;
    p.model = &tp.model;
    p.y = tp.y;
    p.r = tp.r;
    p.basis = tp.basis;
    p.prior = &tp.prior;
    return p;
}

// Over voxels whose 3x3 neighbourhood has a single nonzero truth value.
double slope_rmse(const Matrix& est, const Matrix& truth, std::size_t nx) {
    double s = 0.0;
    std::size_t n = 0;
    const std::size_t ny = truth.rows() / nx;
    for (std::size_t j = 0; j < truth.rows(); ++j) {
        if (truth(j, 0) == 0.0) continue;
        const std::size_t x = j % nx, y = j / nx;
        if (x == 0 || y == 0 || x + 1 == nx || y + 1 == ny) continue;
        bool flat = true;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) flat = flat && truth((y + dy) * nx + x + dx, 0) == truth(j, 0);
        if (!flat) continue;
        const double e = est(j, 0) - truth(j, 0);
        s += e * e;
        ++n;
    }
    return std::sqrt(s / n);
}

}  // namespace

TEST_CASE("em scale update") {
    auto m = SystemModel(ImageGrid::planar(4, 4), ParallelBeamGeometry{4, 6, 1.0}, {1.0, 2.0});
    std::mt19937_64 rng(21);
    auto v = testing::random_matrix(16, 2, rng, 0.2, 2.0);

    SUBCASE("zero image stays zero") {
        auto y = testing::random_matrix(m.lors(), 2, rng, 0.0, 3.0);
        Matrix r(m.lors(), 2, 0.1);
        auto out = em_scale_update(m, r, y, Matrix(16, 2, 0.0));
        for (double e : out.flat()) CHECK(e == 0.0);
    }
    SUBCASE("fixed point when data equal the projection") {
        auto y = m.forward(v);
        auto out = em_scale_update(m, Matrix(m.lors(), 2, 0.0), y, v);
        const auto& p = m.sensitivity();
        for (std::size_t k = 0; k < v.size(); ++k)
            if (p.flat()[k] > 0.0) CHECK(out.flat()[k] == doctest::Approx(v.flat()[k]).epsilon(1e-12));
    }
    SUBCASE("scalar-loop oracle") {
        // Dense P per frame assembled from unit projections.
        const std::size_t nl = m.lors();
        std::vector<Matrix> dense;
        for (std::size_t t = 0; t < 2; ++t) {
            Matrix d(nl, 16);
            for (std::size_t j = 0; j < 16; ++j) {
                std::vector<double> e(16, 0.0), col(nl);
                e[j] = 1.0;
                m.forward_frame(e, m.frame_factors()[t], col);
                for (std::size_t i = 0; i < nl; ++i) d(i, j) = col[i];
            }
            dense.push_back(d);
        }
        auto y = testing::random_matrix(nl, 2, rng, 0.0, 4.0);
        Matrix r(nl, 2, 0.3);
        auto out = em_scale_update(m, r, y, v);
        for (std::size_t t = 0; t < 2; ++t)
            for (std::size_t j = 0; j < 16; ++j) {
                double p = 0.0, s = 0.0;
                for (std::size_t i = 0; i < nl; ++i) {
                    if (!m.lor_mask()[i]) continue;
                    double ybar = r(i, t);
                    for (std::size_t l = 0; l < 16; ++l) ybar += dense[t](i, l) * v(l, t);
                    p += dense[t](i, j);
                    s += dense[t](i, j) * y(i, t) / ybar;
                }
                CHECK(out(j, t) == doctest::Approx(v(j, t) / p * s).epsilon(1e-12));
            }
    }
    CHECK_THROWS_AS(em_scale_update(m, Matrix(m.lors(), 2), Matrix(m.lors(), 2), Matrix(15, 2)), ShapeError);
}

TEST_CASE("patlak v-update") {
    SUBCASE("worked example") {
        const double v = patlak_v_root(3.0, 1.0, 2.0, 1.0);
        CHECK(v == doctest::Approx((1.0 + std::sqrt(13.0)) / 2.0).epsilon(1e-14));
        auto diff = [](double a, double b) {
            return phi_diff(a, b, 1.0, 3.0) - 0.5 * (a - b) * (a + b - 4.0);
        };
        CHECK(std::abs(golden_max(diff, 1e-9, 20.0) - v) < 1e-8 * v);
    }
    SUBCASE("random tuples against golden-section and stationarity") {
        std::mt19937_64 rng(22);
        std::uniform_real_distribution<double> lg(-3.0, 3.0), cu(-2.0, 2.0);
        for (int k = 0; k < 1000; ++k) {
            const double p = std::pow(10.0, lg(rng)), rho = std::pow(10.0, lg(rng));
            const double vhat = std::pow(10.0, lg(rng)), c = cu(rng) * std::pow(10.0, lg(rng));
            const double v = patlak_v_root(vhat, p, c, rho);
            REQUIRE(v > 0.0);
            auto diff = [&](double a, double b) { return phi_diff(a, b, p, vhat) - 0.5 * rho * (a - b) * (a + b - 2 * c); };
            const double hi = 2.0 * (vhat + std::abs(c) + 1.0);
            const double g = golden_max(diff, 1e-300, hi);
            CHECK(testing::rel_diff(g, v) < 1e-8);
            const double scale = std::max({1.0, p, p * vhat / v, rho * std::abs(v - c)});
            CHECK(std::abs(p * vhat / v - p - rho * (v - c)) < 1e-9 * scale);
        }
    }
    SUBCASE("limits") {
        CHECK(patlak_v_root(2.5, 3.0, 7.0, 1e-14) == doctest::Approx(2.5).epsilon(1e-10));
        CHECK(patlak_v_root(0.0, 3.0, -1.0, 0.5) == 0.0);
        CHECK(patlak_v_root(0.0, 3.0, 0.0, 0.5) == 0.0);
        // vhat = 0, c > p / rho: the penalty wins and v = c - p / rho.
        CHECK(patlak_v_root(0.0, 1.0, 5.0, 1.0) == doctest::Approx(4.0));
    }
    SUBCASE("matrix form") {
        Matrix vh(2, 1, 3.0), p(2, 1, 1.0), f(2, 1, 2.5), mu(2, 1, 0.5);
        auto v = patlak_v_update(vh, p, f, mu, 1.0);
        CHECK(v(0, 0) == patlak_v_root(3.0, 1.0, 2.0, 1.0));
        CHECK_THROWS_AS(patlak_v_update(vh, p, f, mu, 0.0), ValidationError);
        CHECK_THROWS_AS(patlak_v_update(vh, Matrix(3, 1), f, mu, 1.0), ShapeError);
    }
}

TEST_CASE("relogan v-update") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.1, 3.0), lg(-2.0, 2.0);

    SUBCASE("single frame equals the patlak update bitwise") {
        auto vh = testing::random_matrix(50, 1, rng, 0.0, 5.0);
        auto p = testing::random_matrix(50, 1, rng, 0.1, 5.0);
        auto vn = testing::random_matrix(50, 1, rng, 0.1, 5.0);
        auto f = testing::random_matrix(50, 1, rng, -2.0, 5.0);
        auto mu = testing::random_matrix(50, 1, rng, -1.0, 1.0);
        for (double rho : {1e-3, 0.7, 40.0}) CHECK(relogan_v_update(vh, p, vn, f, mu, rho) == patlak_v_update(vh, p, f, mu, rho));
    }
    SUBCASE("surrogate touches and minorizes the penalty") {
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t nt = 4;
            std::vector<double> vn(nt), v(nt), c(nt);
            for (std::size_t t = 0; t < nt; ++t) vn[t] = u(rng), v[t] = u(rng), c[t] = 3.0 * u(rng);
            const double rho = std::pow(10.0, lg(rng));
            auto q = [&](const std::vector<double>& x) {
                double s = 0.0, cum = 0.0;
                for (std::size_t i = 0; i < nt; ++i) {
                    cum += x[i];
                    s += (cum - c[i]) * (cum - c[i]);
                }
                return -0.5 * rho * s;
            };
            CHECK(relogan_surrogate(vn, vn, c, rho) == doctest::Approx(q(vn)).epsilon(1e-12));
            CHECK(relogan_surrogate(v, vn, c, rho) <= q(v) + 1e-12 * std::abs(q(v)));
        }
    }
    SUBCASE("roots maximize phi + psi per coordinate") {
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t nt = 4;
            Matrix vh(1, nt), p(1, nt), vn(1, nt), f(1, nt), mu(1, nt);
            for (std::size_t t = 0; t < nt; ++t) {
                vh(0, t) = u(rng), p(0, t) = u(rng), vn(0, t) = u(rng);
                f(0, t) = 4.0 * u(rng), mu(0, t) = u(rng) - 1.5;
            }
            const double rho = std::pow(10.0, lg(rng));
            auto out = relogan_v_update(vh, p, vn, f, mu, rho);
            for (std::size_t t = 0; t < nt; ++t) {
                // Psi restricted to coordinate t: -(rho/2) sum_{i>=t} w (g v - c_i)^2
                // with w = vn_t / S_i and g = S_i / vn_t.
                auto diff = [&](double a, double b) {
                    double d = phi_diff(a, b, p(0, t), vh(0, t));
                    double cum = 0.0;
                    for (std::size_t i = 0; i < nt; ++i) {
                        cum += vn(0, i);
                        if (i < t) continue;
                        const double g = cum / vn(0, t), w = vn(0, t) / cum, ci = f(0, i) - mu(0, i);
                        d -= 0.5 * rho * w * g * (a - b) * (g * (a + b) - 2.0 * ci);
                    }
                    return d;
                };
                const double g = golden_max(diff, 1e-300, 100.0);
                CHECK(testing::rel_diff(g, out(0, t)) < 1e-8);
            }
        }
    }
    SUBCASE("zero expansion point is floored") {
        Matrix vh(1, 2, 1.0), p(1, 2, 1.0), vn(1, 2, 0.0), f(1, 2, 1.0), mu(1, 2, 0.0);
        auto out = relogan_v_update(vh, p, vn, f, mu, 1.0);
        for (double e : out.flat()) {
            CHECK(std::isfinite(e));
            CHECK(e >= 0.0);
        }
    }
}

TEST_CASE("gaussian filter") {
    const auto grid = ImageGrid::planar(21, 17, 2.0, 2.0);
    std::mt19937_64 rng(24);
    auto img = testing::random_matrix(grid.voxels(), 2, rng);
    CHECK(gaussian_filter(img, grid, 0.0) == img);

    Matrix flat(grid.voxels(), 1, 3.25);
    const auto smoothed = gaussian_filter(flat, grid, 6.0);
    for (double e : smoothed.flat()) CHECK(e == doctest::Approx(3.25).epsilon(1e-14));

    // Delta response: the normalized sampled Gaussian on each axis.
    Matrix delta(grid.voxels(), 1, 0.0);
    delta(grid.index(10, 8), 0) = 1.0;
    const double fwhm = 5.0, sigma = fwhm / 2.3548 / 2.0;
    auto out = gaussian_filter(delta, grid, fwhm);
    const int rad = int(std::ceil(4 * sigma));
    double norm = 0.0;
    for (int k = -rad; k <= rad; ++k) norm += std::exp(-0.5 * k * k / (sigma * sigma));
    auto g1 = [&](int k) { return std::abs(k) > rad ? 0.0 : std::exp(-0.5 * k * k / (sigma * sigma)) / norm; };
    for (int dy = -5; dy <= 5; ++dy)
        for (int dx = -5; dx <= 5; ++dx)
            CHECK(out(grid.index(10 + dx, 8 + dy), 0) == doctest::Approx(g1(dx) * g1(dy)).epsilon(1e-12));
    double total = 0.0;
    for (double e : out.flat()) total += e;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(gaussian_filter(img, grid, -1.0), ValidationError);
    CHECK_THROWS_AS(gaussian_filter(Matrix(5, 1), grid, 1.0), ShapeError);
}

TEST_CASE("kernel least-squares fit matches dense normal equations") {
    std::mt19937_64 rng(25);
    const std::size_t n = 7, nt = 3;
    std::vector<Triplet> trip;
    Matrix kd(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i == j || (i + 2 * j) % 3 == 0) {
                const double w = i == j ? 2.5 : 0.2 + double((i * 5 + j * 3) % 7) / 7.0;
                kd(i, j) = w;
                trip.push_back({std::uint32_t(i), std::uint32_t(j), w});
            }
    KernelMatrix k(SparseMatrix::from_triplets(n, n, trip));
    TemporalBasis basis;
    basis.a = testing::random_matrix(nt, 2, rng, 0.1, 2.0);
    auto target = testing::random_matrix(n, nt, rng);

    // Dense (2n) system: H[(j,c),(l,e)] = (K^T K)_jl (A^T A)_ce, b = K^T T A.
    const std::size_t dim = 2 * n;
    std::vector<double> h(dim * dim, 0.0), b(dim, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t l = 0; l < n; ++l) {
            double ktk = 0.0;
            for (std::size_t i = 0; i < n; ++i) ktk += kd(i, j) * kd(i, l);
            for (int c = 0; c < 2; ++c)
                for (int e = 0; e < 2; ++e) {
                    double ata = 0.0;
                    for (std::size_t t = 0; t < nt; ++t) ata += basis.a(t, c) * basis.a(t, e);
                    h[(c * n + j) * dim + e * n + l] = ktk * ata;
                }
        }
    for (std::size_t j = 0; j < n; ++j)
        for (int c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t t = 0; t < nt; ++t) b[c * n + j] += kd(i, j) * target(i, t) * basis.a(t, c);
    // Gaussian elimination with partial pivoting.
    for (std::size_t col = 0; col < dim; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < dim; ++r)
            if (std::abs(h[r * dim + col]) > std::abs(h[piv * dim + col])) piv = r;
        for (std::size_t q = 0; q < dim; ++q) std::swap(h[col * dim + q], h[piv * dim + q]);
        std::swap(b[col], b[piv]);
        for (std::size_t r = col + 1; r < dim; ++r) {
            const double f = h[r * dim + col] / h[col * dim + col];
            for (std::size_t q = col; q < dim; ++q) h[r * dim + q] -= f * h[col * dim + q];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> sol(dim);
    for (std::size_t r = dim; r-- > 0;) {
        double s = b[r];
        for (std::size_t q = r + 1; q < dim; ++q) s -= h[r * dim + q] * sol[q];
        sol[r] = s / h[r * dim + r];
    }

    bool ok = false;
    auto delta = kernel_ls_fit(k, basis, target, Matrix(), 200, &ok);
    CHECK(ok);
    for (std::size_t j = 0; j < n; ++j)
        for (int c = 0; c < 2; ++c) CHECK(delta(j, c) == doctest::Approx(sol[c * n + j]).epsilon(1e-8));

    SUBCASE("warm start at the solution stays there") {
        auto again = kernel_ls_fit(k, basis, target, delta, 1);
        for (std::size_t q = 0; q < delta.size(); ++q) CHECK(again.flat()[q] == doctest::Approx(delta.flat()[q]).epsilon(1e-9));
        auto zero_iter = kernel_ls_fit(k, basis, target, delta, 0);
        for (std::size_t q = 0; q < delta.size(); ++q) CHECK(zero_iter.flat()[q] == doctest::Approx(delta.flat()[q]).epsilon(1e-13));
    }
    SUBCASE("identity kernel is a per-voxel least-squares fit") {
        auto id = KernelMatrix::identity(n);
        auto theta = kernel_ls_fit(id, basis, target, Matrix(), 50);
        auto ref = indirect_patlak_fit(target, basis, std::vector<double>(nt, 1.0));
        for (std::size_t q = 0; q < theta.size(); ++q) CHECK(theta.flat()[q] == doctest::Approx(ref.flat()[q]).epsilon(1e-9));
    }
}

TEST_CASE("nested EM + filter") {
    auto tp = tiny_problem();
    auto prob = as_problem(tp);
    ReconConfig cfg;
    cfg.algorithm = Algorithm::EMFilter;
    cfg.filter_fwhm = 0.0;

    SUBCASE("noiseless data are recovered and the likelihood rises") {
        cfg.n_outer = 400;
        auto res = nested_em_filter(prob, cfg);
        REQUIRE(res.log.size() == 400u);
        for (std::size_t k = 1; k < res.log.size(); ++k)
            CHECK(res.log[k].loglik >= res.log[k - 1].loglik - 1e-9 * std::abs(res.log[k - 1].loglik));
        CHECK(slope_rmse(res.theta.channels, tp.theta, 12) < 0.01 * 5e-4);
        for (double e : res.theta.channels.flat()) CHECK(e >= 0.0);
    }
    SUBCASE("noisy data keep the likelihood monotone") {
        prob.y = poisson_sample(tp.y, 5);
        cfg.n_outer = 60;
        cfg.checkpoints = {10, 60};
        auto res = nested_em_filter(prob, cfg);
        for (std::size_t k = 1; k < res.log.size(); ++k)
            CHECK(res.log[k].loglik >= res.log[k - 1].loglik - 1e-9 * std::abs(res.log[k - 1].loglik));
        REQUIRE(res.checkpoints.size() == 2u);
        CHECK(res.checkpoints[1].second.channels == res.theta.channels);
    }
    SUBCASE("filter applies to the returned image only") {
        cfg.n_outer = 5;
        auto raw = nested_em_filter(prob, cfg);
        cfg.filter_fwhm = 4.0;
        auto smooth = nested_em_filter(prob, cfg);
        CHECK(smooth.theta.channels == gaussian_filter(raw.theta.channels, tp.grid, 4.0));
        CHECK(smooth.log.back().loglik == raw.log.back().loglik);
    }
    SUBCASE("negative basis is rejected") {
        prob.basis.a(0, 1) = -1.0;
        CHECK_THROWS_AS(nested_em_filter(prob, cfg), ValidationError);
    }
}

TEST_CASE("admm reconstructions on noiseless data") {
    auto tp = tiny_problem();
    auto prob = as_problem(tp);
    KernelConfig kc;
    auto k = build_kernel(tp.prior, kc);
    prob.kernel = &k;
    ReconConfig cfg;
    cfg.n_outer = 150;
    cfg.filter_fwhm = 0.0;
    cfg.warm_iters = 20;

    SUBCASE("kmri") {
        // Early-stopped CG on the ill-conditioned kernel converges slowly.
        cfg.n_outer = 1000;
        auto res = kmri(prob, cfg);
        CHECK_FALSE(res.aborted);
        CHECK(slope_rmse(res.theta.channels, tp.theta, 12) < 0.01 * 5e-4);
        CHECK(res.log.back().primal_residual < res.log.front().primal_residual);
    }
    SUBCASE("dip with a direct backbone") {
        prob.network.backbone = Backbone::Direct;
        prob.network.use_kernel_layer = false;
        cfg.epochs = 10;
        cfg.pretrain_epochs = 50;
        auto res = dip_admm(prob, cfg);
        CHECK_FALSE(res.aborted);
        CHECK(slope_rmse(res.theta.channels, tp.theta, 12) < 0.01 * 5e-4);
    }
    SUBCASE("pretraining lowers the first primal residual") {
        prob.network.n_scales = 1;
        prob.network.base_channels = 4;
        cfg.n_outer = 1;
        cfg.epochs = 5;
        cfg.pretrain_epochs = 100;
        auto warm = dip_admm(prob, cfg);
        cfg.pretrain = false;
        auto cold = dip_admm(prob, cfg);
        CHECK(warm.log[0].primal_residual < cold.log[0].primal_residual);
    }
    SUBCASE("checkpoints and configuration checks") {
        cfg.n_outer = 3;
        cfg.checkpoints = {2};
        auto res = reconstruct(prob, [&] { auto c = cfg; c.algorithm = Algorithm::KMRI; return c; }());
        REQUIRE(res.checkpoints.size() == 1u);
        CHECK(res.checkpoints[0].first == 2);
        cfg.n_outer = 0;
        CHECK_THROWS_AS(kmri(prob, cfg), ConfigError);
        cfg.n_outer = 1;
        prob.kernel = nullptr;
        CHECK_THROWS_AS(kmri(prob, cfg), ValidationError);
    }
}

TEST_CASE("re logan direct reconstruction") {
    // 1TCM tissue, reference region and rebinned frames.
    const double k1r = 0.10 / 60, k2r = 0.30 / 60;
    auto cp = feng_input(FengParams{}, 3600.0);
    ReferenceTac cref(one_tissue_response(cp, k1r, k2r));
    FrameSchedule full({{0, 600}, {600, 1200}, {1200, 1800}, {1800, 2400}, {2400, 3000}, {3000, 3600}}, 1200);
    auto reb = rebin_schedule(full, 1200);
    auto basis = relogan_basis(cref, reb.schedule);

    const auto grid = ImageGrid::planar(16, 16, 2.0, 2.0);
    Matrix theta(grid.voxels(), 2, 0.0);
    std::vector<double> z(grid.voxels(), 0.0);
    for (std::size_t yy = 0; yy < 16; ++yy)
        for (std::size_t xx = 0; xx < 16; ++xx) {
            const double dx = xx - 7.5, dy = yy - 7.5, r2 = dx * dx + dy * dy;
            const auto j = grid.index(xx, yy);
            if (r2 < 7.2 * 7.2) {
                const bool inner = r2 < 3.2 * 3.2;
                theta(j, 0) = inner ? 1.4 : 0.9;
                theta(j, 1) = inner ? -8.0 : -4.0;
                z[j] = inner ? 0.5 : 1.0;
            }
        }
    auto s = apply_kinetic(theta, basis);  // cumulative
    auto v = first_difference(s);
    for (std::size_t q = 0; q < v.size(); ++q) REQUIRE(v.flat()[q] >= 0.0);

    SystemModel unit(grid, ParallelBeamGeometry{24, 24, 2.0}, std::vector<double>(basis.frames(), 1.0));
    double total = 0.0;
    for (double e : unit.forward(v).flat()) total += e;
    auto model = unit.scaled(1e5 / total);
    ReconProblem prob;
    prob.model = &model;
    prob.y = model.forward(v);
    prob.r = Matrix(prob.y.rows(), prob.y.cols(), 0.0);
    for (std::size_t i = 0; i < prob.r.rows(); ++i)
        for (std::size_t t = 0; t < prob.r.cols(); ++t) prob.r(i, t) = model.lor_mask()[i] ? 1.0 : 0.0;
    axpy(1.0, prob.r.flat(), prob.y.flat());
    prob.basis = basis;
    PriorImage prior(grid, z);
    prob.prior = &prior;

    ReconConfig cfg;
    cfg.algorithm = Algorithm::EMFilter;
    cfg.model = KineticModel::RELogan;
    cfg.filter_fwhm = 0.0;
    cfg.n_outer = 1000;
    auto res = reconstruct(prob, cfg);
    CHECK_FALSE(res.aborted);
    CHECK(slope_rmse(res.theta.channels, theta, 16) < 0.01 * 1.4);
    // The logged residual is taken on the cumulative image.
    CHECK(res.log.back().primal_residual < 1e-2 * norm2(s.flat()));
    CHECK_THROWS_AS(nested_em_filter(prob, cfg), ValidationError);
}

TEST_CASE("algorithm names and rho") {
    CHECK(parse_algorithm("kmri") == Algorithm::KMRI);
    CHECK(to_string(Algorithm::DIPADMM) == "dip");
    CHECK_THROWS_AS(parse_algorithm("osem"), ConfigError);
    Matrix p(3, 1, 2.0), a(3, 1, 4.0);
    p(2, 0) = 0.0;
    a(2, 0) = 1000.0;  // ignored: outside the sensitivity support
    CHECK(default_rho(p, a, 0.1) == doctest::Approx(0.05));
    CHECK_THROWS_AS(default_rho(p, Matrix(3, 1, 0.0), 0.1), NumericalError);
}
