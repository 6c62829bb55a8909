#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kinetica/core.hpp"
#include "kinetica/sparse.hpp"

namespace kinetica {

/// Parallel-beam sinogram geometry for one transaxial slice. Angles are
/// pi * a / n_angles; radial bin b is centred at (b - (n_bins - 1) / 2) * bin_size.
struct ParallelBeamGeometry {
    std::size_t n_angles = 64;
    std::size_t n_bins = 92;
    double bin_size = 2.0;  // mm

    std::size_t lors_per_slice() const noexcept { return n_angles * n_bins; }
    bool operator==(const ParallelBeamGeometry&) const = default;
};

/// Joseph (linear-interpolation, ray-driven) line-integral matrix for one slice:
/// rows are LORs (angle-major), columns are in-slice voxels; values are mm.
SparseMatrix joseph_matrix(const ImageGrid& grid, const ParallelBeamGeometry& geometry);

/// Per-LOR survival probability exp(-integral of mu) for every slice; mu in 1/mm.
std::vector<double> attenuation_factors(const ImageGrid& grid, const ParallelBeamGeometry& geometry,
                                        std::span<const double> mu_map);

/// Mean radioactive-decay survival over each frame for the given half-life (s).
std::vector<double> decay_frame_factors(const FrameSchedule& schedule, double half_life_s);

inline constexpr double kHalfLifeF18 = 109.77 * 60.0;
inline constexpr double kHalfLifeC11 = 20.4 * 60.0;

/// Linear system P mapping N x T decay-corrected images to M x T expected
/// trues, frame by frame: (P x)_t = frame_factor_t * diag(att) * G x_t, with G
/// the slice projector applied independently to every z slice.
///
/// Matched pair: backward uses the stored transpose of G, so it is the exact
/// adjoint of forward up to rounding. LORs whose geometric row is empty (they
/// miss the field of view) are flagged invalid and excluded from likelihoods.
class SystemModel {
public:
    SystemModel() = default;
    SystemModel(ImageGrid grid, ParallelBeamGeometry geometry, std::vector<double> frame_factors,
                std::vector<double> attenuation);
    /// Unit attenuation.
    SystemModel(ImageGrid grid, ParallelBeamGeometry geometry, std::vector<double> frame_factors);

    const ImageGrid& grid() const noexcept { return grid_; }
    const ParallelBeamGeometry& geometry() const noexcept { return geometry_; }
    std::size_t lors() const noexcept { return geometry_.lors_per_slice() * grid_.nz(); }
    std::size_t voxels() const noexcept { return grid_.voxels(); }
    std::size_t frames() const noexcept { return frame_factors_.size(); }
    const std::vector<double>& frame_factors() const noexcept { return frame_factors_; }
    const std::vector<double>& attenuation() const noexcept { return attenuation_; }
    const std::vector<std::uint8_t>& lor_mask() const noexcept { return lor_mask_; }
    const SparseMatrix& slice_matrix() const noexcept { return g_; }

    /// Same geometry with every frame factor multiplied by `scale`.
    SystemModel scaled(double scale) const;
    /// Same geometry restricted to a subset of frames.
    SystemModel select_frames(std::span<const std::size_t> frames) const;
    /// Same geometry with explicit frame factors.
    SystemModel with_frame_factors(std::vector<double> frame_factors) const;

    Matrix forward(const Matrix& x) const;
    Matrix forward(const DynamicImage& x) const;
    /// Applies P^T frame by frame; g is M x T.
    Matrix backward(const Matrix& g) const;
    /// One frame of forward / backward, with an explicit frame factor.
    void forward_frame(std::span<const double> x, double frame_factor, std::span<double> out) const;
    void backward_frame(std::span<const double> g, double frame_factor, std::span<double> out) const;

    /// p_jt = sum_i P_ijt, N x T. Equal to backward(ones).
    const Matrix& sensitivity() const noexcept { return sensitivity_; }

private:
    void finish();

    ImageGrid grid_;
    ParallelBeamGeometry geometry_;
    std::vector<double> frame_factors_;
    std::vector<double> attenuation_;
    std::vector<std::uint8_t> lor_mask_;
    SparseMatrix g_;
    SparseMatrix gt_;
    Matrix sensitivity_;
};

/// Poisson log-likelihood sum_{t,i} y log ybar - ybar (0 log 0 = 0) over valid
/// LORs, given the mean ybar directly. Throws NumericalError if ybar = 0 where y > 0.
double log_likelihood_mean(const SystemModel& model, const Matrix& y, const Matrix& ybar);
/// Same with ybar = P x + r.
double log_likelihood(const SystemModel& model, const Matrix& r, const Matrix& y, const Matrix& x);

}  // namespace kinetica
