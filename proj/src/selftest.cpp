#include "kinetica/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "kinetica/config.hpp"
#include "kinetica/error.hpp"
#include "kinetica/kernel.hpp"
#include "kinetica/kinetics.hpp"
#include "kinetica/netrep.hpp"
#include "kinetica/recon.hpp"
#include "kinetica/simulate.hpp"
#include "kinetica/system.hpp"

namespace kinetica {

namespace {

std::string sci(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (auto& v : m.flat()) v = u(rng);
    return m;
}

// Golden-section maximizer of a unimodal F on [lo, hi]; diff(a, b) = F(a) - F(b)
// evaluated without cancellation, so the bracket shrinks to a few ulps.
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

// phi(v) - phi(w), phi = p (vhat log v - v)
double phi_diff(double v, double w, double p, double vhat) {
    return p * vhat * std::log1p((v - w) / w) - p * (v - w);
}

}  // namespace

CheckResult timed_check(const std::string& name, const std::function<CheckResult()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
        r = body();
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.name = name;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

CheckResult check_adjointness(int pairs) {
    return timed_check("projector adjointness", [&] {
        const RunConfig desk;
        const auto ph = build_phantom(desk.phantom);
        SystemModel m(ph.grid, desk.geometry, {1.0}, attenuation_factors(ph.grid, desk.geometry, ph.mu));
        std::mt19937_64 rng(2024);
        double worst = 0.0;
        for (int k = 0; k < pairs; ++k) {
            auto x = random_matrix(m.voxels(), 1, rng, 0.0, 1.0);
            auto g = random_matrix(m.lors(), 1, rng, 0.0, 1.0);
            const auto px = m.forward(x);
            const double lhs = dot(px.flat(), g.flat());
            const double rhs = dot(x.flat(), m.backward(g).flat());
            worst = std::max(worst, std::abs(lhs - rhs) / (norm2(px.flat()) * norm2(g.flat())));
        }
        CheckResult r;
        r.pass = worst < 1e-10;
        r.detail = "max normalized gap " + sci(worst) + " over " + std::to_string(pairs) + " pairs (< 1e-10)";
        return r;
    });
}

CheckResult check_v_updates(int tuples) {
    return timed_check("closed-form v-updates", [&] {
        std::mt19937_64 rng(22);
        std::uniform_real_distribution<double> lg(-3.0, 3.0), cu(-2.0, 2.0);
        double worst_p = 0.0;
        for (int k = 0; k < tuples; ++k) {
            const double p = std::pow(10.0, lg(rng)), rho = std::pow(10.0, lg(rng));
            const double vhat = std::pow(10.0, lg(rng)), c = cu(rng) * std::pow(10.0, lg(rng));
            const double v = patlak_v_root(vhat, p, c, rho);
            auto diff = [&](double a, double b) { return phi_diff(a, b, p, vhat) - 0.5 * rho * (a - b) * (a + b - 2 * c); };
            const double g = golden_max(diff, 1e-300, 2.0 * (vhat + std::abs(c) + 1.0));
            worst_p = std::max(worst_p, rel_diff(g, v));
        }

        std::uniform_real_distribution<double> u(0.1, 3.0), lr(-2.0, 2.0);
        double worst_r = 0.0;
        const std::size_t nt = 4;
        for (int trial = 0; trial < 200; ++trial) {
            Matrix vh(1, nt), p(1, nt), vn(1, nt), f(1, nt), mu(1, nt);
            for (std::size_t t = 0; t < nt; ++t) {
                vh(0, t) = u(rng), p(0, t) = u(rng), vn(0, t) = u(rng);
                f(0, t) = 4.0 * u(rng), mu(0, t) = u(rng) - 1.5;
            }
            const double rho = std::pow(10.0, lr(rng));
            auto out = relogan_v_update(vh, p, vn, f, mu, rho);
            for (std::size_t t = 0; t < nt; ++t) {
                // Psi along coordinate t: -(rho/2) sum_{i>=t} w_i (g_i v - c_i)^2,
                // g_i = S_i / vn_t, w_i = vn_t / S_i, S_i the running sum of vn.
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
                worst_r = std::max(worst_r, rel_diff(golden_max(diff, 1e-300, 100.0), out(0, t)));
            }
        }

        bool bitwise = true;
        for (double rho : {1e-3, 0.7, 40.0}) {
            auto vh = random_matrix(64, 1, rng, 0.0, 5.0), p = random_matrix(64, 1, rng, 0.1, 5.0);
            auto vn = random_matrix(64, 1, rng, 0.1, 5.0), f = random_matrix(64, 1, rng, -2.0, 5.0);
            auto mu = random_matrix(64, 1, rng, -1.0, 1.0);
            bitwise = bitwise && relogan_v_update(vh, p, vn, f, mu, rho) == patlak_v_update(vh, p, f, mu, rho);
        }
        CheckResult r;
        r.pass = worst_p < 1e-8 && worst_r < 1e-8 && bitwise;
        r.detail = "patlak max rel " + sci(worst_p) + ", relogan T=4 max rel " + sci(worst_r) + " (< 1e-8), T=1 bitwise " +
                   (bitwise ? "yes" : "NO");
        return r;
    });
}

CheckResult check_network_gradient(int coordinates) {
    return timed_check("network gradient", [&] {
        const auto grid = ImageGrid::planar(8, 8);
        std::mt19937_64 rng(77);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<double> d(64);
        for (auto& v : d) v = u(rng);
        PriorImage z(grid, d);
        KernelConfig kc;
        kc.k_neighbors = 9;
        const auto k = build_kernel(z, kc);
        TemporalBasis basis{random_matrix(4, 2, rng, 0.1, 1.0), KineticModel::Patlak};
        const auto target = random_matrix(64, 4, rng, -1.0, 1.0);

        double worst = 0.0;
        for (int position : {0, 1}) {
            NetworkSpec spec;
            spec.base_channels = 3;
            spec.kernel_layer_position = position;
            spec.parametric_scale = {0.8, 1.1};
            Network net(spec, grid, z, &k, basis);
            const auto a = net.init_params(3);
            auto loss = [&](const std::vector<double>& al) {
                auto out = net.forward(al);
                double s = 0.0;
                for (std::size_t q = 0; q < target.size(); ++q) {
                    const double e = out.dynamic.flat()[q] - target.flat()[q];
                    s += e * e;
                }
                return s;
            };
            Tape tape;
            auto out = net.forward(a, &tape);
            Matrix w(64, 4);
            for (std::size_t q = 0; q < w.size(); ++q) w.flat()[q] = 2.0 * (out.dynamic.flat()[q] - target.flat()[q]);
            const auto grad = net.backward(a, tape, w);
            std::uniform_int_distribution<std::size_t> pick(0, a.size() - 1);
            for (int c = 0; c < coordinates; ++c) {
                const auto i = pick(rng);
                auto ap = a, am = a;
                ap[i] += 1e-5;
                am[i] -= 1e-5;
                const double fd = (loss(ap) - loss(am)) / 2e-5;
                worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8}));
            }
        }
        CheckResult r;
        r.pass = worst < 1e-4;
        r.detail = "max relative error " + sci(worst) + " over " + std::to_string(2 * coordinates) + " coordinates (< 1e-4)";
        return r;
    });
}

CheckResult check_kernel_oracle() {
    return timed_check("kernel construction", [] {
        const std::size_t nx = 8, ny = 8, n = 64;
        const auto grid = ImageGrid::planar(nx, ny);
        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<double> d(n);
        for (auto& v : d) v = u(rng);
        const PriorImage z(grid, d);
        KernelConfig cfg;  // 3x3 patches, 7x7 window, 20 neighbours
        const auto k = build_kernel(z, cfg);

        double mean = 0.0, var = 0.0;
        for (double v : d) mean += v;
        mean /= double(n);
        for (double v : d) var += (v - mean) * (v - mean);
        var /= double(n);
        auto at = [&](long x, long y) {
            x = std::clamp(x, 0L, long(nx) - 1);
            y = std::clamp(y, 0L, long(ny) - 1);
            return d[std::size_t(y) * nx + std::size_t(x)];
        };
        double worst = 0.0;
        bool structure = true;
        for (std::size_t i = 0; i < n; ++i) {
            const long xi = long(i % nx), yi = long(i / nx);
            std::vector<std::pair<double, std::size_t>> all;
            for (std::size_t j = 0; j < n; ++j) {
                const long xj = long(j % nx), yj = long(j / nx);
                if (std::abs(xi - xj) > 3 || std::abs(yi - yj) > 3) continue;
                double d2 = 0.0;
                for (long dy = -1; dy <= 1; ++dy)
                    for (long dx = -1; dx <= 1; ++dx) {
                        const double e = at(xi + dx, yi + dy) - at(xj + dx, yj + dy);
                        d2 += e * e;
                    }
                all.emplace_back(std::exp(-d2 / (2.0 * 9.0 * var)), j);
            }
            std::stable_sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
                if ((a.second == i) != (b.second == i)) return a.second == i;
                return a.first > b.first;
            });
            all.resize(std::min<std::size_t>(20, all.size()));
            std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
            const auto cols = k.matrix().row_cols(i);
            const auto vals = k.matrix().row_values(i);
            if (cols.size() != all.size()) {
                structure = false;
                continue;
            }
            for (std::size_t q = 0; q < cols.size(); ++q) {
                if (cols[q] != all[q].second) structure = false;
                worst = std::max(worst, std::abs(vals[q] - all[q].first));
            }
        }

        // Identical patches weigh 1: vertical stripes, single-pixel patches.
        std::vector<double> stripes(n);
        for (std::size_t j = 0; j < n; ++j) stripes[j] = (j % nx) % 2 ? 1.0 : 0.0;
        KernelConfig pc;
        pc.patch_radius = 0;
        pc.window_radius = 1;
        pc.k_neighbors = 9;
        auto weight = [](const KernelMatrix& km, std::size_t r, std::size_t c) {
            const auto cols = km.matrix().row_cols(r);
            const auto vals = km.matrix().row_values(r);
            for (std::size_t q = 0; q < cols.size(); ++q)
                if (cols[q] == c) return vals[q];
            return -1.0;
        };
        const auto ks = build_kernel(PriorImage(grid, stripes), pc);
        const double one = std::abs(weight(ks, grid.index(3, 3), grid.index(3, 4)) - 1.0);

        // exp(-1) where |df|^2 = 2 N_f sigma^2: checkerboard plus two pixels at m, m^2 = 2 sigma^2(m).
        std::vector<double> cb(n);
        for (std::size_t j = 0; j < n; ++j) cb[j] = j % 2 ? 1.0 : 0.0;
        double m = 0.7;
        for (int it = 0; it < 200; ++it) {
            cb[0] = cb[2] = m;
            double mu = 0.0, s2 = 0.0;
            for (double v : cb) mu += v;
            mu /= double(n);
            for (double v : cb) s2 += (v - mu) * (v - mu);
            m = std::sqrt(2.0 * s2 / double(n));
        }
        cb[0] = cb[2] = m;
        pc.window_radius = 3;
        pc.k_neighbors = 49;
        const auto ke = build_kernel(PriorImage(grid, cb), pc);
        const double einv = std::abs(weight(ke, 0, 8) - std::exp(-1.0));

        CheckResult r;
        r.pass = structure && worst < 1e-12 && one < 1e-12 && einv < 1e-12;
        r.detail = std::string("rows ") + (structure ? "match" : "DIFFER") + ", max weight diff " + sci(worst) +
                   ", identical-patch |k-1| " + sci(one) + ", |k-exp(-1)| " + sci(einv) + " (< 1e-12)";
        return r;
    });
}

CheckResult check_relogan_plumbing() {
    return timed_check("RE Logan plumbing", [] {
        const auto full = FrameSchedule::from_blocks({{8, 15}, {4, 60}, {27, 120}});
        const double t2 = 2760.0;
        const auto rb = rebin_schedule(full, t2);
        std::mt19937_64 rng(9);
        std::poisson_distribution<int> pois(20.0);
        Matrix counts(50, full.size());
        for (auto& c : counts.flat()) c = pois(rng);
        const auto merged = merge_frames(counts, rb.merge);
        double before = 0.0, after = 0.0;
        for (double c : counts.flat()) before += c;
        for (double c : merged.flat()) after += c;
        const bool conserved = before == after;

        const auto v = random_matrix(40, 7, rng, -1.0, 1.0);
        double round = 0.0;
        const auto back = first_difference(cumulative_bin(v));
        for (std::size_t q = 0; q < v.size(); ++q) round = std::max(round, std::abs(back.flat()[q] - v.flat()[q]));

        const auto cp = feng_input(FengParams{}, 3600.0);
        const ReferenceTac cref(one_tissue_response(cp, 0.10 / 60, 0.30 / 60));
        double worst = 0.0;
        for (double k1 : {0.05, 0.08, 0.12, 0.2}) {
            const auto tissue = one_tissue_response(cp, k1 / 60, 0.15 / 60);
            std::vector<double> tac;
            for (const auto& f : full.frames()) tac.push_back(tissue.integral(f.t_end) - tissue.integral(f.t_start));
            const auto lo = indirect_logan_fit(tac, full, cref, t2);
            const auto re = indirect_relogan_fit(tac, full, cref, t2);
            worst = std::max(worst, std::abs(lo.slope - re.slope) / std::abs(lo.slope));
        }
        CheckResult r;
        r.pass = conserved && round < 1e-12 && worst < 0.05;
        r.detail = std::string("rebin counts ") + (conserved ? "conserved" : "CHANGED") + ", cumulative round trip " +
                   sci(round) + " (< 1e-12), max Logan/RE Logan slope gap " + sci(worst) + " (< 5e-2)";
        return r;
    });
}

std::vector<CheckResult> run_selftests() {
    return {check_adjointness(), check_v_updates(), check_network_gradient(), check_kernel_oracle(),
            check_relogan_plumbing()};
}

}  // namespace kinetica
