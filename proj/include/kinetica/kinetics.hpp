#pragma once

#include <filesystem>
#include <vector>

#include "kinetica/core.hpp"

namespace kinetica {

/// Piecewise-linear time curve sampled at strictly increasing times starting
/// at 0 with nonnegative values. Integrals are exact for the interpolant.
class TimeCurve {
public:
    TimeCurve() = default;
    TimeCurve(std::vector<double> times, std::vector<double> values);

    const std::vector<double>& times() const noexcept { return t_; }
    const std::vector<double>& values() const noexcept { return v_; }
    double end_time() const noexcept { return t_.empty() ? 0.0 : t_.back(); }

    /// Throws DomainError outside [0, end_time()].
    double value(double t) const;
    /// integral_0^t C
    double integral(double t) const;
    /// integral_0^t integral_0^tau C dtau1 dtau
    double double_integral(double t) const;

    /// Throws DomainError unless the curve covers [0, t_end].
    void require_coverage(double t_end, const char* what) const;

private:
    std::size_t segment(double t) const;

    std::vector<double> t_, v_;
    std::vector<double> int1_, int2_;  // running integrals at sample times
};

/// Plasma input C_p.
class InputFunction : public TimeCurve {
public:
    using TimeCurve::TimeCurve;
    explicit InputFunction(TimeCurve c) : TimeCurve(std::move(c)) {}
};

/// Reference-region TAC C_ref.
class ReferenceTac : public TimeCurve {
public:
    using TimeCurve::TimeCurve;
    explicit ReferenceTac(TimeCurve c) : TimeCurve(std::move(c)) {}
};

/// Tri-exponential FDG-like plasma input (Feng model), time in minutes internally.
struct FengParams {
    double a1 = 851.1225;   // per min
    double a2 = 21.8798;
    double a3 = 20.8113;
    double l1 = -4.133859;  // per min
    double l2 = -0.1191;
    double l3 = -0.01043449;
    double delay_min = 0.0;
};

double feng_value(const FengParams& p, double t_seconds);
/// Sample the Feng model on [0, t_end] with step `dt` seconds.
InputFunction feng_input(const FengParams& p, double t_end, double dt = 0.1);

/// Single-tissue compartment response K1 * (C_in conv exp(-k2 t)), exact for the
/// piecewise-linear input; rates per second. Sampled at the input's times.
TimeCurve one_tissue_response(const TimeCurve& input, double k1, double k2);

struct TemporalBasis {
    Matrix a;  // T x 2
    KineticModel model = KineticModel::Patlak;
    std::size_t frames() const noexcept { return a.rows(); }
};

/// Row k = [integral over frame of integral_0 C_p, integral over frame of C_p].
TemporalBasis patlak_basis(const InputFunction& cp, const FrameSchedule& schedule);
/// Row k = [integral_0^{t_end,k} C_ref, C_ref(t_end,k)].
TemporalBasis relogan_basis(const ReferenceTac& cref, const FrameSchedule& schedule);

/// x = theta A^T (N x T). Also the network's kinetic-model layer.
Matrix apply_kinetic(const Matrix& theta, const TemporalBasis& basis);
DynamicImage apply_kinetic(const ParametricImage& theta, const TemporalBasis& basis);

/// Column k = sum_{t <= k} v_t, i.e. v B with B upper-triangular ones.
Matrix cumulative_bin(const Matrix& v);
/// Inverse of cumulative_bin.
Matrix first_difference(const Matrix& s);

struct RebinnedSchedule {
    FrameSchedule schedule;
    /// merge[k] lists the raw frame indices summed into new frame k.
    std::vector<std::vector<std::size_t>> merge;
};

/// Merge every frame ending at or before t2* into one frame [0, t2*]; frames
/// starting at or after t2* are kept. t2* must be a frame boundary (or 0).
RebinnedSchedule rebin_schedule(const FrameSchedule& full, double t2_star);
/// Sum the columns of per-frame data according to a merge map.
Matrix merge_frames(const Matrix& data, const std::vector<std::vector<std::size_t>>& merge);

/// Per-voxel weighted least squares for x ~ theta A^T.
ParametricImage indirect_patlak_fit(const DynamicImage& x, const TemporalBasis& basis,
                                    const std::vector<double>& weights);
Matrix indirect_patlak_fit(const Matrix& x, const TemporalBasis& basis, const std::vector<double>& weights);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Graphical fits of one frame-integrated TAC (values = integral of c over each
/// frame of `schedule`, frames contiguous from 0). Only frames starting at or
/// after the steady time enter the regression.
LineFit indirect_logan_fit(const std::vector<double>& tac, const FrameSchedule& schedule,
                           const ReferenceTac& cref, double t1_star);
LineFit indirect_relogan_fit(const std::vector<double>& tac, const FrameSchedule& schedule,
                             const ReferenceTac& cref, double t2_star);

/// Two-column CSV (t seconds, value). Blank lines and '#' comments are skipped;
/// a non-numeric first row is treated as a header.
TimeCurve read_tac_csv(const std::filesystem::path& path);
void write_tac_csv(const std::filesystem::path& path, const TimeCurve& curve);

}  // namespace kinetica
