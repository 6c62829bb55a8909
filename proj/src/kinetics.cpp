#include "kinetica/kinetics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kinetica/error.hpp"

namespace kinetica {

TimeCurve::TimeCurve(std::vector<double> times, std::vector<double> values)
    : t_(std::move(times)), v_(std::move(values)) {
    if (t_.size() != v_.size() || t_.size() < 2) throw ValidationError("time curve needs at least two samples");
    if (t_.front() != 0.0) throw ValidationError("time curve must start at t = 0");
    for (std::size_t k = 0; k < t_.size(); ++k) {
        if (!std::isfinite(v_[k]) || v_[k] < 0.0) throw ValidationError("time curve values must be finite and >= 0");
        if (k > 0 && !(t_[k] > t_[k - 1])) throw ValidationError("time curve samples must be strictly increasing");
    }
    int1_.assign(t_.size(), 0.0);
    int2_.assign(t_.size(), 0.0);
    for (std::size_t k = 1; k < t_.size(); ++k) {
        const double h = t_[k] - t_[k - 1];
        int1_[k] = int1_[k - 1] + 0.5 * h * (v_[k - 1] + v_[k]);
        int2_[k] = int2_[k - 1] + int1_[k - 1] * h + h * h * (2.0 * v_[k - 1] + v_[k]) / 6.0;
    }
}

std::size_t TimeCurve::segment(double t) const {
    if (t_.empty() || t < 0.0 || t > t_.back()) {
        throw DomainError("time " + std::to_string(t) + " s outside curve support [0, " +
                          std::to_string(end_time()) + "]");
    }
    auto it = std::upper_bound(t_.begin(), t_.end(), t);
    std::size_t k = static_cast<std::size_t>(it - t_.begin());
    return k == 0 ? 0 : std::min(k - 1, t_.size() - 2);
}

double TimeCurve::value(double t) const {
    const auto k = segment(t);
    const double h = t_[k + 1] - t_[k];
    const double s = t - t_[k];
    return v_[k] + (v_[k + 1] - v_[k]) * s / h;
}

double TimeCurve::integral(double t) const {
    const auto k = segment(t);
    const double h = t_[k + 1] - t_[k];
    const double s = t - t_[k];
    const double slope = (v_[k + 1] - v_[k]) / h;
    return int1_[k] + v_[k] * s + 0.5 * slope * s * s;
}

double TimeCurve::double_integral(double t) const {
    const auto k = segment(t);
    const double h = t_[k + 1] - t_[k];
    const double s = t - t_[k];
    const double slope = (v_[k + 1] - v_[k]) / h;
    return int2_[k] + int1_[k] * s + 0.5 * v_[k] * s * s + slope * s * s * s / 6.0;
}

void TimeCurve::require_coverage(double t_end, const char* what) const {
    if (t_.empty() || t_end > t_.back() * (1.0 + 1e-12)) {
        throw DomainError(std::string(what) + " ends at " + std::to_string(end_time()) +
                          " s but the schedule needs " + std::to_string(t_end) + " s");
    }
}

double feng_value(const FengParams& p, double t_seconds) {
    const double t = t_seconds / 60.0 - p.delay_min;
    if (t <= 0.0) return 0.0;
    const double v = (p.a1 * t - p.a2 - p.a3) * std::exp(p.l1 * t) + p.a2 * std::exp(p.l2 * t) +
                     p.a3 * std::exp(p.l3 * t);
    return std::max(0.0, v);
}

InputFunction feng_input(const FengParams& p, double t_end, double dt) {
    if (!(t_end > 0.0) || !(dt > 0.0)) throw ValidationError("feng_input needs positive end time and step");
    const auto n = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
    std::vector<double> t(n + 1), v(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        t[k] = std::min(t_end, static_cast<double>(k) * dt);
        v[k] = feng_value(p, t[k]);
    }
    return InputFunction(std::move(t), std::move(v));
}

TimeCurve one_tissue_response(const TimeCurve& input, double k1, double k2) {
    if (k1 < 0.0 || k2 < 0.0) throw ValidationError("compartment rates must be nonnegative");
    const auto& t = input.times();
    const auto& u = input.values();
    std::vector<double> c(t.size(), 0.0);
    for (std::size_t k = 1; k < t.size(); ++k) {
        const double h = t[k] - t[k - 1];
        const double a = u[k - 1];
        const double b = (u[k] - u[k - 1]) / h;
        const double kh = k2 * h;
        double e, i0, i1;  // e = exp(-k2 h), i0 = int_0^h exp(-k2 s) ds, i1 = int_0^h s exp(-k2 s) ds
        if (kh < 1e-6) {
            e = 1.0 - kh;
            i0 = h * (1.0 - 0.5 * kh);
            i1 = h * h * (0.5 - kh / 3.0);
        } else {
            e = std::exp(-kh);
            i0 = (1.0 - e) / k2;
            i1 = (1.0 - e * (1.0 + kh)) / (k2 * k2);
        }
        // int_0^h (a + b (h - s)) exp(-k2 s) ds
        c[k] = c[k - 1] * e + k1 * ((a + b * h) * i0 - b * i1);
        c[k] = std::max(0.0, c[k]);
    }
    return TimeCurve(t, std::move(c));
}

TemporalBasis patlak_basis(const InputFunction& cp, const FrameSchedule& schedule) {
    cp.require_coverage(schedule.frames().back().t_end, "input function");
    for (const auto& f : schedule.frames()) {
        if (f.t_start < schedule.steady_time()) {
            throw DomainError("Patlak basis frames must start at or after the steady time");
        }
    }
    TemporalBasis b{Matrix(schedule.size(), 2), KineticModel::Patlak};
    for (std::size_t k = 0; k < schedule.size(); ++k) {
        const auto& f = schedule[k];
        b.a(k, 0) = cp.double_integral(f.t_end) - cp.double_integral(f.t_start);
        b.a(k, 1) = cp.integral(f.t_end) - cp.integral(f.t_start);
    }
    return b;
}

TemporalBasis relogan_basis(const ReferenceTac& cref, const FrameSchedule& schedule) {
    cref.require_coverage(schedule.frames().back().t_end, "reference TAC");
    for (const auto& f : schedule.frames()) {
        if (f.t_end < schedule.steady_time()) {
            throw DomainError("RE Logan basis frames must end at or after the steady time");
        }
    }
    TemporalBasis b{Matrix(schedule.size(), 2), KineticModel::RELogan};
    for (std::size_t k = 0; k < schedule.size(); ++k) {
        const double te = schedule[k].t_end;
        b.a(k, 0) = cref.integral(te);
        b.a(k, 1) = cref.value(te);
    }
    return b;
}

Matrix apply_kinetic(const Matrix& theta, const TemporalBasis& basis) {
    if (theta.cols() != 2 || basis.a.cols() != 2) throw ShapeError("apply_kinetic: theta must be N x 2");
    const std::size_t n = theta.rows(), t_count = basis.frames();
    Matrix x(n, t_count);
    const auto s = theta.col(0), i = theta.col(1);
    for (std::size_t t = 0; t < t_count; ++t) {
        const double a0 = basis.a(t, 0), a1 = basis.a(t, 1);
        auto xc = x.col(t);
        for (std::size_t j = 0; j < n; ++j) xc[j] = s[j] * a0 + i[j] * a1;
    }
    return x;
}

DynamicImage apply_kinetic(const ParametricImage& theta, const TemporalBasis& basis) {
    auto x = apply_kinetic(theta.channels, basis);
    for (double& v : x.flat()) v = std::max(0.0, v);
    return DynamicImage(theta.grid, std::move(x));
}

Matrix cumulative_bin(const Matrix& v) {
    Matrix s = v;
    for (std::size_t t = 1; t < s.cols(); ++t) {
        auto prev = s.col(t - 1);
        auto cur = s.col(t);
        for (std::size_t j = 0; j < s.rows(); ++j) cur[j] += prev[j];
    }
    return s;
}

Matrix first_difference(const Matrix& s) {
    Matrix v = s;
    for (std::size_t t = s.cols(); t-- > 1;) {
        auto prev = s.col(t - 1);
        auto cur = v.col(t);
        for (std::size_t j = 0; j < s.rows(); ++j) cur[j] -= prev[j];
    }
    return v;
}

RebinnedSchedule rebin_schedule(const FrameSchedule& full, double t2_star) {
    RebinnedSchedule out;
    if (t2_star <= 0.0) {
        out.schedule = FrameSchedule(full.frames(), 0.0);
        for (std::size_t k = 0; k < full.size(); ++k) out.merge.push_back({k});
        return out;
    }
    const auto& fr = full.frames();
    std::size_t boundary = fr.size();
    for (std::size_t k = 0; k < fr.size(); ++k) {
        if (std::abs(fr[k].t_end - t2_star) <= 1e-9 * std::max(1.0, t2_star)) {
            boundary = k;
            break;
        }
    }
    if (boundary == fr.size() || boundary + 1 == fr.size()) {
        throw DomainError("t2* = " + std::to_string(t2_star) +
                          " s is not an interior frame boundary; counts are never interpolated");
    }
    std::vector<Frame> frames{{0.0, fr[boundary].t_end}};
    std::vector<std::size_t> first;
    for (std::size_t k = 0; k <= boundary; ++k) first.push_back(k);
    out.merge.push_back(std::move(first));
    for (std::size_t k = boundary + 1; k < fr.size(); ++k) {
        frames.push_back(fr[k]);
        out.merge.push_back({k});
    }
    out.schedule = FrameSchedule(std::move(frames), t2_star);
    return out;
}

Matrix merge_frames(const Matrix& data, const std::vector<std::vector<std::size_t>>& merge) {
    Matrix out(data.rows(), merge.size(), 0.0);
    for (std::size_t k = 0; k < merge.size(); ++k) {
        auto dst = out.col(k);
        for (auto src_k : merge[k]) {
            if (src_k >= data.cols()) throw ShapeError("merge map references a missing frame");
            auto src = data.col(src_k);
            for (std::size_t i = 0; i < data.rows(); ++i) dst[i] += src[i];
        }
    }
    return out;
}

Matrix indirect_patlak_fit(const Matrix& x, const TemporalBasis& basis, const std::vector<double>& weights) {
    const std::size_t t_count = basis.frames();
    if (x.cols() != t_count || weights.size() != t_count) throw ShapeError("fit: frame counts disagree");
    if (t_count < 2) throw NumericalError("fit needs at least two frames");
    double h00 = 0, h01 = 0, h11 = 0;
    for (std::size_t t = 0; t < t_count; ++t) {
        const double a0 = basis.a(t, 0), a1 = basis.a(t, 1), w = weights[t];
        h00 += w * a0 * a0;
        h01 += w * a0 * a1;
        h11 += w * a1 * a1;
    }
    const double det = h00 * h11 - h01 * h01;
    if (!(std::abs(det) > 1e-12 * h00 * h11) || !std::isfinite(det)) {
        throw NumericalError("temporal basis is rank deficient; graphical fit is singular");
    }
    Matrix theta(x.rows(), 2);
    for (std::size_t j = 0; j < x.rows(); ++j) {
        double r0 = 0, r1 = 0;
        for (std::size_t t = 0; t < t_count; ++t) {
            const double wx = weights[t] * x(j, t);
            r0 += wx * basis.a(t, 0);
            r1 += wx * basis.a(t, 1);
        }
        theta(j, 0) = (h11 * r0 - h01 * r1) / det;
        theta(j, 1) = (h00 * r1 - h01 * r0) / det;
    }
    return theta;
}

ParametricImage indirect_patlak_fit(const DynamicImage& x, const TemporalBasis& basis,
                                    const std::vector<double>& weights) {
    return ParametricImage(x.grid, indirect_patlak_fit(x.data, basis, weights));
}

namespace {

LineFit ols(const std::vector<double>& xs, const std::vector<double>& ys) {
    const auto n = static_cast<double>(xs.size());
    if (xs.size() < 2) throw NumericalError("graphical fit needs at least two frames past the steady time");
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        mx += xs[k];
        my += ys[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
    }
    if (!(sxx > 1e-300)) throw NumericalError("graphical fit abscissae are degenerate");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

void check_tac(const std::vector<double>& tac, const FrameSchedule& schedule) {
    if (tac.size() != schedule.size()) throw ShapeError("TAC length differs from the schedule");
}

}  // namespace

LineFit indirect_logan_fit(const std::vector<double>& tac, const FrameSchedule& schedule,
                           const ReferenceTac& cref, double t1_star) {
    check_tac(tac, schedule);
    cref.require_coverage(schedule.frames().back().t_end, "reference TAC");
    std::vector<double> xs, ys;
    double running = 0.0;
    for (std::size_t k = 0; k < schedule.size(); ++k) {
        running += tac[k];
        if (schedule[k].t_start < t1_star) continue;
        const double c = tac[k] / schedule[k].duration();
        if (c == 0.0) throw NumericalError("Logan fit: zero tissue concentration in frame " + std::to_string(k));
        xs.push_back(cref.integral(schedule[k].t_end) / c);
        ys.push_back(running / c);
    }
    return ols(xs, ys);
}

LineFit indirect_relogan_fit(const std::vector<double>& tac, const FrameSchedule& schedule,
                             const ReferenceTac& cref, double t2_star) {
    check_tac(tac, schedule);
    cref.require_coverage(schedule.frames().back().t_end, "reference TAC");
    std::vector<double> xs, ys;
    double running = 0.0;
    for (std::size_t k = 0; k < schedule.size(); ++k) {
        running += tac[k];
        if (schedule[k].t_start < t2_star) continue;
        const double te = schedule[k].t_end;
        const double c = cref.value(te);
        if (c == 0.0) throw NumericalError("RE Logan fit: zero reference concentration at frame " + std::to_string(k));
        xs.push_back(cref.integral(te) / c);
        ys.push_back(running / c);
    }
    return ols(xs, ys);
}

TimeCurve read_tac_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open TAC file");
    std::vector<double> t, v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double a, b;
        if (!(ss >> a >> b)) {
            if (t.empty() && v.empty() && lineno == 1) continue;  // header
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected two numbers");
        }
        t.push_back(a);
        v.push_back(b);
    }
    try {
        return TimeCurve(std::move(t), std::move(v));
    } catch (const ValidationError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_tac_csv(const std::filesystem::path& path, const TimeCurve& curve) {
    std::ofstream out(path);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "t_s,value\n";
    out.precision(17);
    for (std::size_t k = 0; k < curve.times().size(); ++k) out << curve.times()[k] << ',' << curve.values()[k] << '\n';
    if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace kinetica
