#include <cmath>

#include "doctest.h"
#include "kinetica/error.hpp"
#include "kinetica/kinetics.hpp"
#include "support.hpp"

using namespace kinetica;

namespace {

TimeCurve constant_curve(double c, double t_end) { return TimeCurve({0.0, t_end}, {c, c}); }

FrameSchedule sim_schedule() {
    return FrameSchedule::from_blocks({{4, 20}, {4, 40}, {4, 60}, {4, 180}, {8, 300}}, 35 * 60.0);
}

FrameSchedule pib_schedule() { return FrameSchedule::from_blocks({{8, 15}, {4, 60}, {27, 120}}); }

std::vector<double> frame_integrals(const TimeCurve& c, const FrameSchedule& s) {
    std::vector<double> out;
    for (const auto& f : s.frames()) out.push_back(c.integral(f.t_end) - c.integral(f.t_start));
    return out;
}

}  // namespace

TEST_CASE("time curve interpolation and integrals") {
    TimeCurve c({0, 1, 3}, {0, 2, 2});
    CHECK(c.value(0.5) == doctest::Approx(1.0));
    CHECK(c.value(2.0) == doctest::Approx(2.0));
    CHECK(c.integral(1.0) == doctest::Approx(1.0));
    CHECK(c.integral(3.0) == doctest::Approx(5.0));
    // integral_0^t of t^2 for t <= 1 -> t^3/3
    CHECK(c.double_integral(1.0) == doctest::Approx(1.0 / 3.0));
    CHECK(c.double_integral(3.0) == doctest::Approx(1.0 / 3.0 + 2.0 + 4.0));
    CHECK_THROWS_AS(c.value(3.5), DomainError);
    CHECK_THROWS_AS(TimeCurve({0, 1}, {1, -1}), ValidationError);
    CHECK_THROWS_AS(TimeCurve({0, 0}, {1, 1}), ValidationError);
    CHECK_THROWS_AS(TimeCurve({1, 2}, {1, 1}), ValidationError);
}

TEST_CASE("patlak basis analytic rows") {
    InputFunction one(constant_curve(1.0, 100.0));
    FrameSchedule s({{10, 20}, {20, 50}});
    auto b = patlak_basis(one, s);
    CHECK(b.a(0, 0) == doctest::Approx((400.0 - 100.0) / 2));
    CHECK(b.a(0, 1) == doctest::Approx(10.0));
    CHECK(b.a(1, 0) == doctest::Approx((2500.0 - 400.0) / 2));
    CHECK(b.a(1, 1) == doctest::Approx(30.0));

    auto z = patlak_basis(InputFunction(constant_curve(0.0, 100.0)), s);
    CHECK(z.a == Matrix(2, 2, 0.0));

    CHECK_THROWS_AS(patlak_basis(one, FrameSchedule({{10, 200}})), DomainError);
    CHECK_THROWS_AS(patlak_basis(one, FrameSchedule({{10, 20}, {20, 30}}, 20.0)), DomainError);
    CHECK_THROWS_AS(indirect_patlak_fit(Matrix(1, 2, 1.0), z, {1, 1}), NumericalError);
}

TEST_CASE("patlak basis matches fine Riemann sum of the Feng input") {
    FengParams fp;
    auto cp = feng_input(fp, 3600.0);
    auto sched = sim_schedule().steady_frames();
    REQUIRE(sched.size() == 5);
    auto basis = patlak_basis(cp, sched);

    // Analytic Feng values, midpoint rule for C_p, trapezoid for its running integral.
    const std::size_t steps = 1'200'000;
    const double h = 3600.0 / static_cast<double>(steps);
    std::vector<double> edge_int1, edge_int2;
    double i1 = 0.0, i2 = 0.0;
    std::size_t next_edge = 0;
    std::vector<double> edges{2100, 2400, 2700, 3000, 3300, 3600};
    for (std::size_t k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * h;
        if (next_edge < edges.size() && std::abs(t - edges[next_edge]) < h / 2) {
            edge_int1.push_back(i1);
            edge_int2.push_back(i2);
            ++next_edge;
        }
        if (k == steps) break;
        const double inc = h * feng_value(fp, t + h / 2);
        i2 += h * (i1 + 0.5 * inc);
        i1 += inc;
    }
    REQUIRE(edge_int1.size() == 6);
    for (std::size_t r = 0; r < 5; ++r) {
        CHECK(testing::rel_diff(basis.a(r, 0), edge_int2[r + 1] - edge_int2[r]) < 1e-6);
        CHECK(testing::rel_diff(basis.a(r, 1), edge_int1[r + 1] - edge_int1[r]) < 1e-6);
    }
}

TEST_CASE("relogan basis") {
    ReferenceTac one(constant_curve(1.0, 100.0));
    auto b = relogan_basis(one, FrameSchedule({{0, 30}, {30, 70}}));
    CHECK(b.a(0, 0) == doctest::Approx(30.0));
    CHECK(b.a(0, 1) == doctest::Approx(1.0));
    CHECK(b.a(1, 0) == doctest::Approx(70.0));
    CHECK(b.a(1, 1) == doctest::Approx(1.0));
    CHECK(b.model == KineticModel::RELogan);

    // Reversible reference TAC against a fine Riemann sum of the sampled curve.
    auto cp = feng_input(FengParams{}, 3600.0);
    ReferenceTac cref(one_tissue_response(cp, 0.1 / 60, 0.3 / 60));
    auto sched = rebin_schedule(pib_schedule(), 2760.0).schedule;
    auto rb = relogan_basis(cref, sched);
    for (std::size_t r = 0; r < sched.size(); ++r) {
        const double te = sched[r].t_end;
        const std::size_t steps = 1'000'000;
        const double h = te / steps;
        double s = 0.0;
        for (std::size_t k = 0; k < steps; ++k) s += h * cref.value((k + 0.5) * h);
        CHECK(testing::rel_diff(rb.a(r, 0), s) < 1e-6);
    }
}

TEST_CASE("one tissue response against closed form") {
    // Constant input c: C(t) = K1 c (1 - exp(-k2 t)) / k2.
    TimeCurve in({0, 50, 100}, {2, 2, 2});
    auto out = one_tissue_response(in, 0.3, 0.05);
    CHECK(out.values()[2] == doctest::Approx(0.3 * 2 * (1 - std::exp(-5.0)) / 0.05).epsilon(1e-12));
    // Ramp input t, k2 = 0: C = K1 t^2 / 2.
    auto ramp = one_tissue_response(TimeCurve({0, 10}, {0, 10}), 2.0, 0.0);
    CHECK(ramp.values()[1] == doctest::Approx(100.0));
}

TEST_CASE("apply_kinetic") {
    InputFunction one(constant_curve(1.0, 1.0));
    auto b = patlak_basis(one, FrameSchedule({{0, 1}}));
    auto x = apply_kinetic(Matrix(1, 2, std::vector<double>{1.0, 0.0}), b);
    CHECK(x(0, 0) == doctest::Approx(0.5));
    CHECK(apply_kinetic(Matrix(3, 2, 0.0), b) == Matrix(3, 1, 0.0));

    std::mt19937_64 rng(3);
    auto theta = testing::random_matrix(7, 2, rng);
    TemporalBasis rb{testing::random_matrix(5, 2, rng), KineticModel::RELogan};
    auto y = apply_kinetic(theta, rb);
    for (std::size_t j = 0; j < 7; ++j) {
        for (std::size_t t = 0; t < 5; ++t) {
            double s = 0.0;
            for (std::size_t c = 0; c < 2; ++c) s += theta(j, c) * rb.a(t, c);
            CHECK(std::abs(y(j, t) - s) < 1e-14);
        }
    }
    CHECK_THROWS_AS(apply_kinetic(Matrix(2, 3, 0.0), rb), ShapeError);
}

TEST_CASE("cumulative binning") {
    auto s = cumulative_bin(Matrix(1, 3, std::vector<double>{1, 2, 3}));
    CHECK(s == Matrix(1, 3, std::vector<double>{1, 3, 6}));
    Matrix single(4, 1, 2.5);
    CHECK(cumulative_bin(single) == single);

    std::mt19937_64 rng(5);
    auto v = testing::random_matrix(6, 5, rng);
    auto vb = cumulative_bin(v);
    for (std::size_t j = 0; j < 6; ++j) {
        for (std::size_t k = 0; k < 5; ++k) {
            double acc = 0.0;
            for (std::size_t t = 0; t < 5; ++t) acc += v(j, t) * (t <= k ? 1.0 : 0.0);
            CHECK(std::abs(vb(j, k) - acc) < 1e-14);
        }
    }
    CHECK(testing::max_abs_diff(first_difference(vb).flat(), v.flat()) < 1e-12);
}

TEST_CASE("rebinning") {
    auto full = pib_schedule();
    auto rb = rebin_schedule(full, 46 * 60.0);
    REQUIRE(rb.schedule.size() == 8);
    CHECK(rb.schedule[0] == Frame{0, 2760});
    CHECK(rb.schedule[1] == Frame{2760, 2880});
    CHECK(rb.schedule[7].t_end == 3600);
    CHECK(rb.merge[0].size() == 32);

    auto same = rebin_schedule(full, 0.0);
    CHECK(same.schedule.frames() == full.frames());
    CHECK_THROWS_AS(rebin_schedule(full, 2770.0), DomainError);

    std::mt19937_64 rng(9);
    std::poisson_distribution<int> pois(20.0);
    Matrix counts(10, full.size());
    for (auto& c : counts.flat()) c = pois(rng);
    auto merged = merge_frames(counts, rb.merge);
    double before = 0, after = 0;
    for (double c : counts.flat()) before += c;
    for (double c : merged.flat()) after += c;
    CHECK(before == after);
}

TEST_CASE("indirect patlak fit") {
    auto cp = feng_input(FengParams{}, 3600.0);
    auto basis = patlak_basis(cp, sim_schedule().steady_frames());
    std::vector<double> w(5, 300.0);
    std::mt19937_64 rng(13);
    auto theta = testing::random_matrix(20, 2, rng, 0.0, 1e-3);
    auto fit = indirect_patlak_fit(apply_kinetic(theta, basis), basis, w);
    for (std::size_t k = 0; k < theta.size(); ++k) {
        CHECK(std::abs(fit.flat()[k] - theta.flat()[k]) < 1e-10 * std::max(1.0, std::abs(theta.flat()[k])));
    }

    Matrix col0(1, 5);
    for (std::size_t t = 0; t < 5; ++t) col0(0, t) = basis.a(t, 0);
    auto unit = indirect_patlak_fit(col0, basis, w);
    CHECK(unit(0, 0) == doctest::Approx(1.0));
    CHECK(std::abs(unit(0, 1)) < 1e-9);

    // Noisy data against normal equations solved by Cramer's rule in a scaled basis.
    std::vector<double> w2{1, 2, 3, 2, 1};
    auto noisy = testing::random_matrix(3, 5, rng, 0.0, 100.0);
    auto th = indirect_patlak_fit(noisy, basis, w2);
    for (std::size_t j = 0; j < 3; ++j) {
        double g[2] = {0, 0};
        for (std::size_t t = 0; t < 5; ++t) {
            const double resid = noisy(j, t) - th(j, 0) * basis.a(t, 0) - th(j, 1) * basis.a(t, 1);
            g[0] += w2[t] * resid * basis.a(t, 0);
            g[1] += w2[t] * resid * basis.a(t, 1);
        }
        // Stationarity of the weighted residual, relative to the data scale.
        double s0 = 0, s1 = 0;
        for (std::size_t t = 0; t < 5; ++t) {
            s0 += w2[t] * std::abs(noisy(j, t) * basis.a(t, 0));
            s1 += w2[t] * std::abs(noisy(j, t) * basis.a(t, 1));
        }
        CHECK(std::abs(g[0]) < 1e-9 * s0);
        CHECK(std::abs(g[1]) < 1e-9 * s1);
    }
}

TEST_CASE("graphical fits") {
    auto sched = FrameSchedule::from_blocks({{6, 100}});
    ReferenceTac cref(constant_curve(2.0, 600.0));

    // tac = DV * C_ref frame integrals, q = 0.
    auto tac = frame_integrals(TimeCurve({0, 600}, {3.0, 3.0}), sched);
    auto re = indirect_relogan_fit(tac, sched, cref, 200.0);
    CHECK(re.slope == doctest::Approx(1.5));
    CHECK(std::abs(re.intercept) < 1e-9);

    // Constant c and C_ref equal: Logan Y = t_e (times c) / c = t_e, X = 2 t_e / 2 -> slope 1.
    auto tac2 = frame_integrals(TimeCurve({0, 600}, {2.0, 2.0}), sched);
    auto lo = indirect_logan_fit(tac2, sched, cref, 200.0);
    auto re2 = indirect_relogan_fit(tac2, sched, cref, 200.0);
    CHECK(lo.slope == doctest::Approx(1.0));
    CHECK(re2.slope == doctest::Approx(1.0));
    CHECK(std::abs(lo.intercept) < 1e-9);

    std::vector<double> zeros(6, 0.0);
    CHECK_THROWS_AS(indirect_logan_fit(zeros, sched, cref, 200.0), NumericalError);
    ReferenceTac zero_ref(constant_curve(0.0, 600.0));
    CHECK_THROWS_AS(indirect_relogan_fit(tac, sched, zero_ref, 200.0), NumericalError);
}

TEST_CASE("Logan and RE Logan slopes agree on reversible TACs") {
    auto cp = feng_input(FengParams{}, 3600.0);
    auto cref_curve = one_tissue_response(cp, 0.1 / 60, 0.3 / 60);
    ReferenceTac cref(cref_curve);
    auto full = pib_schedule();
    for (double k1 : {0.08, 0.12, 0.2}) {
        auto tissue = one_tissue_response(cp, k1 / 60, 0.15 / 60);
        auto tac = frame_integrals(tissue, full);
        auto lo = indirect_logan_fit(tac, full, cref, 2760.0);
        auto re = indirect_relogan_fit(tac, full, cref, 2760.0);
        CAPTURE(k1);
        CAPTURE(lo.slope);
        CAPTURE(re.slope);
        CHECK(std::abs(lo.slope - re.slope) / lo.slope < 0.05);
    }
}

TEST_CASE("TAC csv round trip") {
    testing::TempDir dir;
    TimeCurve c({0, 1.5, 7}, {0, 3.25, 1e-3});
    write_tac_csv(dir / "c.csv", c);
    auto back = read_tac_csv(dir / "c.csv");
    CHECK(back.times() == c.times());
    CHECK(back.values() == c.values());
    CHECK_THROWS_AS(read_tac_csv(dir / "missing.csv"), IoError);
}
