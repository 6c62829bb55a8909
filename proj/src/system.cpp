#include "kinetica/system.hpp"

#include <cmath>
#include <numbers>

#include "kinetica/error.hpp"
#include "kinetica/kernels.hpp"

namespace kinetica {

SparseMatrix joseph_matrix(const ImageGrid& grid, const ParallelBeamGeometry& geo) {
    const std::size_t nx = grid.nx(), ny = grid.ny();
    const double dx = grid.voxel_size[0], dy = grid.voxel_size[1];
    const double cx = 0.5 * static_cast<double>(nx - 1), cy = 0.5 * static_cast<double>(ny - 1);
    const double cb = 0.5 * static_cast<double>(geo.n_bins - 1);
    if (geo.n_angles == 0 || geo.n_bins == 0 || !(geo.bin_size > 0.0)) {
        throw ValidationError("projector geometry needs angles, bins and a positive bin size");
    }

    std::vector<Triplet> t;
    t.reserve(geo.lors_per_slice() * 2 * std::max(nx, ny));
    for (std::size_t a = 0; a < geo.n_angles; ++a) {
        const double phi = std::numbers::pi * static_cast<double>(a) / static_cast<double>(geo.n_angles);
        const double c = std::cos(phi), s = std::sin(phi);
        for (std::size_t b = 0; b < geo.n_bins; ++b) {
            const auto row = static_cast<std::uint32_t>(a * geo.n_bins + b);
            const double u = (static_cast<double>(b) - cb) * geo.bin_size;
            // Points on the LOR satisfy x cos + y sin = u.
            if (std::abs(s) >= std::abs(c)) {
                const double len = dx / std::abs(s);
                for (std::size_t i = 0; i < nx; ++i) {
                    const double x = (static_cast<double>(i) - cx) * dx;
                    const double fy = (u - x * c) / s / dy + cy;
                    const double j0 = std::floor(fy);
                    const double w1 = fy - j0;
                    const auto j = static_cast<long long>(j0);
                    if (j >= 0 && j < static_cast<long long>(ny) && w1 < 1.0)
                        t.push_back({row, static_cast<std::uint32_t>(static_cast<std::size_t>(j) * nx + i), len * (1.0 - w1)});
                    if (j + 1 >= 0 && j + 1 < static_cast<long long>(ny) && w1 > 0.0)
                        t.push_back({row, static_cast<std::uint32_t>(static_cast<std::size_t>(j + 1) * nx + i), len * w1});
                }
            } else {
                const double len = dy / std::abs(c);
                for (std::size_t j = 0; j < ny; ++j) {
                    const double y = (static_cast<double>(j) - cy) * dy;
                    const double fx = (u - y * s) / c / dx + cx;
                    const double i0 = std::floor(fx);
                    const double w1 = fx - i0;
                    const auto i = static_cast<long long>(i0);
                    if (i >= 0 && i < static_cast<long long>(nx) && w1 < 1.0)
                        t.push_back({row, static_cast<std::uint32_t>(j * nx + static_cast<std::size_t>(i)), len * (1.0 - w1)});
                    if (i + 1 >= 0 && i + 1 < static_cast<long long>(nx) && w1 > 0.0)
                        t.push_back({row, static_cast<std::uint32_t>(j * nx + static_cast<std::size_t>(i + 1)), len * w1});
                }
            }
        }
    }
    return SparseMatrix::from_triplets(geo.lors_per_slice(), nx * ny, std::move(t));
}

std::vector<double> attenuation_factors(const ImageGrid& grid, const ParallelBeamGeometry& geo,
                                        std::span<const double> mu_map) {
    if (mu_map.size() != grid.voxels()) throw ShapeError("attenuation map does not match the grid");
    const auto g = joseph_matrix(grid, geo);
    const std::size_t m2 = geo.lors_per_slice(), n2 = grid.nx() * grid.ny();
    std::vector<double> att(m2 * grid.nz());
    for (std::size_t z = 0; z < grid.nz(); ++z) {
        kernels::par::spmv(g, mu_map.subspan(z * n2, n2), std::span<double>(att).subspan(z * m2, m2));
    }
    for (double& a : att) a = std::exp(-a);
    return att;
}

std::vector<double> decay_frame_factors(const FrameSchedule& schedule, double half_life_s) {
    if (!(half_life_s > 0.0)) throw ValidationError("half-life must be positive");
    const double lambda = std::numbers::ln2 / half_life_s;
    std::vector<double> f;
    f.reserve(schedule.size());
    for (const auto& fr : schedule.frames()) {
        f.push_back((std::exp(-lambda * fr.t_start) - std::exp(-lambda * fr.t_end)) / (lambda * fr.duration()));
    }
    return f;
}

SystemModel::SystemModel(ImageGrid grid, ParallelBeamGeometry geometry, std::vector<double> frame_factors,
                         std::vector<double> attenuation)
    : grid_(grid), geometry_(geometry), frame_factors_(std::move(frame_factors)),
      attenuation_(std::move(attenuation)) {
    if (frame_factors_.empty()) throw ValidationError("system model needs at least one frame");
    for (double f : frame_factors_) {
        if (!(f > 0.0) || !std::isfinite(f)) throw ValidationError("frame factors must be positive");
    }
    if (attenuation_.size() != lors()) throw ShapeError("attenuation factors must have one value per LOR");
    for (double a : attenuation_) {
        if (!(a > 0.0 && a <= 1.0)) throw ValidationError("attenuation factors must lie in (0, 1]");
    }
    g_ = joseph_matrix(grid_, geometry_);
    gt_ = g_.transpose();
    finish();
}

SystemModel::SystemModel(ImageGrid grid, ParallelBeamGeometry geometry, std::vector<double> frame_factors)
    : SystemModel(grid, geometry, std::move(frame_factors),
                  std::vector<double>(geometry.lors_per_slice() * grid.nz(), 1.0)) {}

void SystemModel::finish() {
    const std::size_t m2 = geometry_.lors_per_slice();
    lor_mask_.assign(lors(), 0);
    for (std::size_t z = 0; z < grid_.nz(); ++z)
        for (std::size_t i = 0; i < m2; ++i) lor_mask_[z * m2 + i] = g_.row_ptr()[i + 1] > g_.row_ptr()[i] ? 1 : 0;

    const Matrix ones(lors(), 1, 1.0);
    sensitivity_ = Matrix(voxels(), frames());
    for (std::size_t t = 0; t < frames(); ++t) backward_frame(ones.col(0), frame_factors_[t], sensitivity_.col(t));
}

SystemModel SystemModel::scaled(double scale) const {
    auto ff = frame_factors_;
    for (double& f : ff) f *= scale;
    return with_frame_factors(std::move(ff));
}

SystemModel SystemModel::select_frames(std::span<const std::size_t> frames) const {
    std::vector<double> ff;
    for (auto k : frames) {
        if (k >= frame_factors_.size()) throw ShapeError("frame index out of range");
        ff.push_back(frame_factors_[k]);
    }
    return with_frame_factors(std::move(ff));
}

SystemModel SystemModel::with_frame_factors(std::vector<double> frame_factors) const {
    SystemModel m = *this;
    if (frame_factors.empty()) throw ValidationError("system model needs at least one frame");
    for (double f : frame_factors) {
        if (!(f > 0.0) || !std::isfinite(f)) throw ValidationError("frame factors must be positive");
    }
    m.frame_factors_ = std::move(frame_factors);
    m.finish();
    return m;
}

void SystemModel::forward_frame(std::span<const double> x, double ff, std::span<double> out) const {
    if (x.size() != voxels() || out.size() != lors()) throw ShapeError("forward: operand size mismatch");
    const std::size_t m2 = geometry_.lors_per_slice(), n2 = grid_.nx() * grid_.ny();
    for (std::size_t z = 0; z < grid_.nz(); ++z) {
        auto o = out.subspan(z * m2, m2);
        kernels::par::spmv(g_, x.subspan(z * n2, n2), o);
        const double* att = attenuation_.data() + z * m2;
        for (std::size_t i = 0; i < m2; ++i) o[i] *= ff * att[i];
    }
}

void SystemModel::backward_frame(std::span<const double> g, double ff, std::span<double> out) const {
    if (g.size() != lors() || out.size() != voxels()) throw ShapeError("backward: operand size mismatch");
    const std::size_t m2 = geometry_.lors_per_slice(), n2 = grid_.nx() * grid_.ny();
    std::vector<double> weighted(m2);
    for (std::size_t z = 0; z < grid_.nz(); ++z) {
        const double* att = attenuation_.data() + z * m2;
        for (std::size_t i = 0; i < m2; ++i) weighted[i] = ff * att[i] * g[z * m2 + i];
        kernels::par::spmv(gt_, weighted, out.subspan(z * n2, n2));
    }
}

Matrix SystemModel::forward(const Matrix& x) const {
    if (x.rows() != voxels() || x.cols() != frames()) {
        throw ShapeError("forward: image must be N x T for this system model");
    }
    Matrix y(lors(), frames());
    for (std::size_t t = 0; t < frames(); ++t) forward_frame(x.col(t), frame_factors_[t], y.col(t));
    return y;
}

Matrix SystemModel::forward(const DynamicImage& x) const {
    if (!(x.grid == grid_)) throw ShapeError("forward: image grid differs from the system grid");
    return forward(x.data);
}

Matrix SystemModel::backward(const Matrix& g) const {
    if (g.rows() != lors() || g.cols() != frames()) {
        throw ShapeError("backward: projection data must be M x T for this system model");
    }
    Matrix x(voxels(), frames());
    for (std::size_t t = 0; t < frames(); ++t) backward_frame(g.col(t), frame_factors_[t], x.col(t));
    return x;
}

double log_likelihood_mean(const SystemModel& model, const Matrix& y, const Matrix& ybar) {
    if (y.rows() != model.lors() || ybar.rows() != model.lors() || y.cols() != ybar.cols()) {
        throw ShapeError("log_likelihood: data and mean must both be M x T");
    }
    const auto& mask = model.lor_mask();
    // Sum per frame, then across frames, in fixed order.
    double total = 0.0;
    for (std::size_t t = 0; t < y.cols(); ++t) {
        const auto yt = y.col(t);
        const auto mt = ybar.col(t);
        double s = 0.0;
        for (std::size_t i = 0; i < yt.size(); ++i) {
            if (!mask[i]) continue;
            if (mt[i] <= 0.0) {
                if (yt[i] > 0.0) {
                    throw NumericalError("log-likelihood is -inf: zero mean on LOR " + std::to_string(i) +
                                         " of frame " + std::to_string(t) + " with counts");
                }
                continue;
            }
            s += (yt[i] > 0.0 ? yt[i] * std::log(mt[i]) : 0.0) - mt[i];
        }
        total += s;
    }
    return total;
}

double log_likelihood(const SystemModel& model, const Matrix& r, const Matrix& y, const Matrix& x) {
    auto ybar = model.forward(x);
    if (r.rows() != ybar.rows() || r.cols() != ybar.cols()) throw ShapeError("randoms must be M x T");
    for (std::size_t k = 0; k < ybar.size(); ++k) ybar.flat()[k] += r.flat()[k];
    return log_likelihood_mean(model, y, ybar);
}

}  // namespace kinetica
