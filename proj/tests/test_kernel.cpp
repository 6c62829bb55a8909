#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "kinetica/error.hpp"
#include "kinetica/kernel.hpp"
#include "support.hpp"

using namespace kinetica;

namespace {

PriorImage random_prior(std::size_t nx, std::size_t ny, std::size_t nz, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> d(nx * ny * nz);
    for (auto& v : d) v = u(rng);
    return PriorImage(ImageGrid({nx, ny, nz}, {1, 1, 1}), std::move(d));
}

Matrix dense(const SparseMatrix& s) {
    Matrix d(s.rows(), s.cols(), 0.0);
    for (std::size_t r = 0; r < s.rows(); ++r) {
        auto c = s.row_cols(r);
        auto v = s.row_values(r);
        for (std::size_t k = 0; k < c.size(); ++k) d(r, c[k]) = v[k];
    }
    return d;
}

double inner(const Matrix& a, const Matrix& b) { return dot(a.flat(), b.flat()); }

}  // namespace

TEST_CASE("patch features") {
    KernelConfig cfg;
    PriorImage c(ImageGrid::planar(5, 4), std::vector<double>(20, 3.0));
    auto f = extract_features(c, cfg);
    CHECK(f.cols() == 9);
    for (double v : f.flat()) CHECK(v == 3.0);

    std::vector<double> ramp(6 * 6 * 6);
    ImageGrid g3({6, 6, 6}, {1, 1, 1});
    for (std::size_t z = 0; z < 6; ++z)
        for (std::size_t y = 0; y < 6; ++y)
            for (std::size_t x = 0; x < 6; ++x) ramp[g3.index(x, y, z)] = x + 10.0 * y + 100.0 * z;
    auto f3 = extract_features(PriorImage(g3, ramp), cfg);
    CHECK(f3.cols() == 27);
    const auto j = g3.index(2, 3, 4);
    std::size_t col = 0;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) CHECK(f3(j, col++) == (2 + dx) + 10.0 * (3 + dy) + 100.0 * (4 + dz));
    // Edge replication at the corner.
    CHECK(f3(g3.index(0, 0, 0), 0) == 0.0);

    KernelConfig r2;
    r2.patch_radius = 2;
    CHECK(extract_features(c, r2).cols() == 25);
}

TEST_CASE("analytic kernel weights") {
    // Vertical stripes: identical patches along a stripe.
    ImageGrid g = ImageGrid::planar(8, 8);
    std::vector<double> d(64);
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) d[g.index(x, y)] = (x % 2) ? 1.0 : 0.0;
    PriorImage z(g, d);
    KernelConfig cfg;
    cfg.patch_radius = 0;
    cfg.window_radius = 1;
    cfg.k_neighbors = 9;
    auto k = build_kernel(z, cfg);
    const double sigma2 = prior_variance(z);
    CHECK(sigma2 == doctest::Approx(0.25));
    // N_f = 1: |df|^2 = 1 against 2 N_f sigma^2 = 0.5.
    const auto i = g.index(3, 3);
    auto dk = dense(k.matrix());
    CHECK(std::abs(dk(i, g.index(3, 4)) - 1.0) < 1e-12);
    CHECK(std::abs(dk(i, g.index(4, 3)) - std::exp(-2.0)) < 1e-12);

    // Every stored weight obeys the formula on a sparse two-level image.
    std::vector<double> e(64, 0.0);
    for (std::size_t k2 = 0; k2 < 64; ++k2) e[k2] = (k2 % 4 == 0) ? 1.0 : 0.0;
    PriorImage z2(g, e);
    const double s2 = prior_variance(z2);
    auto kz = build_kernel(z2, cfg);
    auto f = extract_features(z2, cfg);
    bool found = false;
    for (std::size_t r = 0; r < 64; ++r) {
        auto cols = kz.matrix().row_cols(r);
        auto vals = kz.matrix().row_values(r);
        for (std::size_t q = 0; q < cols.size(); ++q) {
            const double df = f(r, 0) - f(cols[q], 0);
            CHECK(std::abs(vals[q] - std::exp(-df * df / (2.0 * s2))) < 1e-12);
            if (std::abs(std::abs(df) - 1.0) < 1e-15) found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("weight equals exp(-1) when the squared distance is 2 N_f sigma^2") {
    // Checkerboard of 0/1 plus two pixels at level m, with m solved so that m^2 = 2 sigma^2.
    ImageGrid g = ImageGrid::planar(8, 8);
    std::vector<double> d(64, 0.0);
    for (std::size_t k = 0; k < 64; ++k) d[k] = (k % 2) ? 1.0 : 0.0;
    double m = 0.7;
    for (int it = 0; it < 200; ++it) {
        d[0] = m;
        d[2] = m;
        m = std::sqrt(2.0 * prior_variance(PriorImage(g, d)));
    }
    d[0] = m;
    d[2] = m;
    PriorImage z(g, d);
    KernelConfig cfg;
    cfg.patch_radius = 0;
    cfg.window_radius = 3;
    cfg.k_neighbors = 49;
    auto k = build_kernel(z, cfg);
    auto dk = dense(k.matrix());
    const double s2 = prior_variance(z);
    CHECK(std::abs(m * m - 2.0 * s2) < 1e-15);
    // Pixel 0 (value m) against pixel 8 (value 0).
    CHECK(std::abs(dk(0, 8) - std::exp(-1.0)) < 1e-12);
    CHECK(std::abs(dk(0, 2) - 1.0) < 1e-12);
    CHECK(std::abs(dk(0, 0) - 1.0) < 1e-12);
}

TEST_CASE("kernel matches brute-force window search") {
    auto z = random_prior(8, 8, 1, 21);
    KernelConfig cfg;  // 3x3 patch, 7x7 window, 20 neighbours
    auto k = build_kernel(z, cfg);
    auto f = extract_features(z, cfg);
    const double s2 = prior_variance(z);
    for (std::size_t i = 0; i < 64; ++i) {
        const long xi = i % 8, yi = i / 8;
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t j = 0; j < 64; ++j) {
            const long xj = j % 8, yj = j / 8;
            if (std::abs(xi - xj) > 3 || std::abs(yi - yj) > 3) continue;
            double d2 = 0;
            for (std::size_t c = 0; c < 9; ++c) d2 += (f(i, c) - f(j, c)) * (f(i, c) - f(j, c));
            all.emplace_back(std::exp(-d2 / (2 * 9 * s2)), j);
        }
        std::stable_sort(all.begin(), all.end(), [&](auto& a, auto& b) {
            if ((a.second == i) != (b.second == i)) return a.second == i;
            return a.first > b.first;
        });
        all.resize(std::min<std::size_t>(20, all.size()));
        std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.second < b.second; });
        auto cols = k.matrix().row_cols(i);
        auto vals = k.matrix().row_values(i);
        REQUIRE(cols.size() == all.size());
        double min_kept = 2.0;
        for (std::size_t q = 0; q < cols.size(); ++q) {
            CHECK(cols[q] == all[q].second);
            CHECK(std::abs(vals[q] - all[q].first) < 1e-12);
            CHECK(vals[q] > 0.0);
            CHECK(vals[q] <= 1.0);
            min_kept = std::min(min_kept, vals[q]);
        }
        CHECK(std::find(cols.begin(), cols.end(), i) != cols.end());
        // Discarded in-window candidates never beat the weakest kept weight.
        for (std::size_t j = 0; j < 64; ++j) {
            const long xj = j % 8, yj = j / 8;
            if (std::abs(xi - xj) > 3 || std::abs(yi - yj) > 3) continue;
            if (std::find(cols.begin(), cols.end(), j) != cols.end()) continue;
            double d2 = 0;
            for (std::size_t c = 0; c < 9; ++c) d2 += (f(i, c) - f(j, c)) * (f(i, c) - f(j, c));
            CHECK(std::exp(-d2 / (2 * 9 * s2)) <= min_kept);
        }
    }
}

TEST_CASE("kernel apply and transpose") {
    auto z = random_prior(8, 8, 1, 3);
    auto k = build_kernel(z, KernelConfig{});
    std::mt19937_64 rng(4);
    auto x = testing::random_matrix(64, 3, rng);
    auto g = testing::random_matrix(64, 3, rng);
    auto kx = k.apply(x);
    auto d = dense(k.matrix());
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 64; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < 64; ++j) s += d(i, j) * x(j, c);
            CHECK(std::abs(kx(i, c) - s) < 1e-12);
        }
    const double lhs = inner(kx, g), rhs = inner(x, k.apply_transpose(g));
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(lhs));
    CHECK(k.apply(Matrix(64, 2, 0.0)) == Matrix(64, 2, 0.0));
    CHECK(k.apply_transpose(Matrix(64, 2, 0.0)) == Matrix(64, 2, 0.0));
    CHECK_THROWS_AS(k.apply(Matrix(63, 1, 0.0)), ShapeError);

    // Keeping the full window makes K symmetric, so apply == apply_transpose.
    KernelConfig full;
    full.k_neighbors = 49;
    auto ks = build_kernel(z, full);
    auto a = ks.apply(x), b = ks.apply_transpose(x);
    CHECK(testing::max_abs_diff(a.flat(), b.flat()) < 1e-12);
}

TEST_CASE("degenerate constant prior") {
    PriorImage c(ImageGrid::planar(8, 8), std::vector<double>(64, 2.0));
    KernelConfig cfg;
    cfg.window_radius = 1;
    cfg.k_neighbors = 9;
    auto k = build_kernel(c, cfg);
    std::mt19937_64 rng(8);
    auto x = testing::random_matrix(64, 1, rng);
    auto y = k.apply(x);
    for (long yy = 0; yy < 8; ++yy)
        for (long xx = 0; xx < 8; ++xx) {
            double s = 0;
            int n = 0;
            for (long dy = -1; dy <= 1; ++dy)
                for (long dx = -1; dx <= 1; ++dx) {
                    const long a = xx + dx, b = yy + dy;
                    if (a < 0 || b < 0 || a >= 8 || b >= 8) continue;
                    s += x(b * 8 + a, 0);
                    ++n;
                }
            CHECK(std::abs(y(yy * 8 + xx, 0) - s / n) < 1e-12);
        }
}

TEST_CASE("row normalization and config validation") {
    auto z = random_prior(6, 6, 1, 5);
    KernelConfig cfg;
    cfg.normalize_rows = true;
    auto k = build_kernel(z, cfg);
    for (double s : k.matrix().row_sums()) CHECK(s == doctest::Approx(1.0));
    // 1-Lipschitz in max norm once rows sum to one.
    std::mt19937_64 rng(2);
    auto x = testing::random_matrix(36, 1, rng), y = testing::random_matrix(36, 1, rng);
    auto kx = k.apply(x), ky = k.apply(y);
    CHECK(testing::max_abs_diff(kx.flat(), ky.flat()) <= testing::max_abs_diff(x.flat(), y.flat()) + 1e-15);

    KernelConfig bad;
    bad.window_radius = 1;
    bad.k_neighbors = 10;
    CHECK_THROWS_AS(build_kernel(z, bad), ValidationError);
    PriorImage z3 = random_prior(8, 8, 8, 1);
    CHECK(KernelConfig{}.resolved_neighbors(z3.grid) == 50);
    auto k3 = build_kernel(z3, KernelConfig{});
    for (std::size_t r = 0; r < 512; ++r) CHECK(k3.matrix().row_cols(r).size() == 50);
}

TEST_CASE("kernel dump round trip") {
    testing::TempDir dir;
    auto k = build_kernel(random_prior(6, 6, 1, 9), KernelConfig{});
    dump_kernel(dir / "k", k);
    auto back = load_kernel(dir / "k");
    CHECK(back.matrix() == k.matrix());
}
