#include "kinetica/kernel.hpp"

#include <algorithm>
#include <cmath>

#include "kinetica/error.hpp"
#include "kinetica/kernels.hpp"
#include "kinetica/volume_io.hpp"

namespace kinetica {

namespace {

// Offsets along the active axes; singleton axes get a single zero offset.
std::array<int, 3> radius_per_axis(const ImageGrid& g, int r) {
    std::array<int, 3> out{};
    for (int a = 0; a < 3; ++a) out[a] = g.dims[a] > 1 ? r : 0;
    return out;
}

std::size_t clamp_index(long v, std::size_t n) {
    if (v < 0) return 0;
    if (v >= static_cast<long>(n)) return n - 1;
    return static_cast<std::size_t>(v);
}

}  // namespace

std::size_t KernelConfig::resolved_neighbors(const ImageGrid& grid) const {
    if (k_neighbors > 0) return k_neighbors;
    return grid.spatial_rank() >= 3 ? 50 : 20;
}

double prior_variance(const PriorImage& z) {
    const auto n = static_cast<double>(z.data.size());
    double mean = 0.0;
    for (double v : z.data) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : z.data) var += (v - mean) * (v - mean);
    return var / n;
}

Matrix extract_features(const PriorImage& z, const KernelConfig& cfg) {
    if (cfg.patch_radius < 0) throw ValidationError("patch_radius must be >= 0");
    const auto& g = z.grid;
    const auto r = radius_per_axis(g, cfg.patch_radius);
    const std::size_t nf = static_cast<std::size_t>((2 * r[0] + 1) * (2 * r[1] + 1) * (2 * r[2] + 1));
    Matrix f(g.voxels(), nf);
    for (std::size_t zz = 0; zz < g.nz(); ++zz) {
        for (std::size_t y = 0; y < g.ny(); ++y) {
            for (std::size_t x = 0; x < g.nx(); ++x) {
                const auto j = g.index(x, y, zz);
                std::size_t c = 0;
                for (int dz = -r[2]; dz <= r[2]; ++dz) {
                    for (int dy = -r[1]; dy <= r[1]; ++dy) {
                        for (int dx = -r[0]; dx <= r[0]; ++dx) {
                            const auto sx = clamp_index(static_cast<long>(x) + dx, g.nx());
                            const auto sy = clamp_index(static_cast<long>(y) + dy, g.ny());
                            const auto sz = clamp_index(static_cast<long>(zz) + dz, g.nz());
                            f(j, c++) = z.data[g.index(sx, sy, sz)];
                        }
                    }
                }
            }
        }
    }
    return f;
}

KernelMatrix::KernelMatrix(SparseMatrix k) : k_(std::move(k)), kt_(k_.transpose()) {
    if (k_.rows() != k_.cols()) throw ShapeError("kernel matrix must be square");
}

Matrix KernelMatrix::apply(const Matrix& x) const {
    if (x.rows() != size()) throw ShapeError("kernel apply: row count differs from kernel size");
    Matrix y(x.rows(), x.cols());
    kernels::par::spmm(k_, x, y);
    return y;
}

Matrix KernelMatrix::apply_transpose(const Matrix& g) const {
    if (g.rows() != size()) throw ShapeError("kernel apply_transpose: row count differs from kernel size");
    Matrix y(g.rows(), g.cols());
    kernels::par::spmm(kt_, g, y);
    return y;
}

KernelMatrix build_kernel(const PriorImage& z, const KernelConfig& cfg) {
    if (cfg.window_radius < 0) throw ValidationError("window_radius must be >= 0");
    const auto& g = z.grid;
    for (double v : z.data) {
        if (!std::isfinite(v)) throw ValidationError("prior image must be finite");
    }
    const auto w = radius_per_axis(g, cfg.window_radius);
    const std::size_t window = static_cast<std::size_t>((2 * w[0] + 1) * (2 * w[1] + 1) * (2 * w[2] + 1));
    const std::size_t k_keep = cfg.resolved_neighbors(g);
    if (k_keep > window) {
        throw ValidationError("k_neighbors (" + std::to_string(k_keep) + ") exceeds the search window volume (" +
                              std::to_string(window) + ")");
    }
    const Matrix f = extract_features(z, cfg);
    const std::size_t nf = f.cols();
    const double sigma2 = prior_variance(z);
    const bool degenerate = !(sigma2 > 0.0);
    if (degenerate) warn("constant prior image: kernel falls back to equal weights within the search window");
    const double denom = 2.0 * static_cast<double>(nf) * sigma2;

    const std::size_t n = g.voxels();
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
    const long nx = static_cast<long>(g.nx()), ny = static_cast<long>(g.ny()), nz = static_cast<long>(g.nz());

#pragma omp parallel for schedule(dynamic, 64) num_threads(kernels::thread_limit())
    for (std::size_t i = 0; i < n; ++i) {
        const long x = static_cast<long>(i % g.nx());
        const long y = static_cast<long>((i / g.nx()) % g.ny());
        const long zz = static_cast<long>(i / (g.nx() * g.ny()));
        std::vector<std::pair<double, std::uint32_t>> cand;
        cand.reserve(window);
        for (long dz = -w[2]; dz <= w[2]; ++dz) {
            const long sz = zz + dz;
            if (sz < 0 || sz >= nz) continue;
            for (long dy = -w[1]; dy <= w[1]; ++dy) {
                const long sy = y + dy;
                if (sy < 0 || sy >= ny) continue;
                for (long dx = -w[0]; dx <= w[0]; ++dx) {
                    const long sx = x + dx;
                    if (sx < 0 || sx >= nx) continue;
                    const auto j = g.index(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy),
                                           static_cast<std::size_t>(sz));
                    double kij = 1.0;
                    if (!degenerate) {
                        double d2 = 0.0;
                        for (std::size_t c = 0; c < nf; ++c) {
                            const double d = f(i, c) - f(j, c);
                            d2 += d * d;
                        }
                        kij = std::exp(-d2 / denom);
                    }
                    cand.emplace_back(kij, static_cast<std::uint32_t>(j));
                }
            }
        }
        const auto self = static_cast<std::uint32_t>(i);
        auto order = [self](const std::pair<double, std::uint32_t>& a, const std::pair<double, std::uint32_t>& b) {
            if ((a.second == self) != (b.second == self)) return a.second == self;
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        };
        const std::size_t keep = std::min(k_keep, cand.size());
        std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(keep), cand.end(), order);
        cand.resize(keep);
        std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
        double sum = 0.0;
        for (const auto& c : cand) sum += c.first;
        const bool norm = cfg.normalize_rows || degenerate;
        auto& row = rows[i];
        row.reserve(keep);
        for (const auto& c : cand) row.emplace_back(c.second, norm ? c.first / sum : c.first);
    }

    std::vector<std::size_t> row_ptr(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) row_ptr[i + 1] = row_ptr[i] + rows[i].size();
    std::vector<std::uint32_t> cols(row_ptr[n]);
    std::vector<double> vals(row_ptr[n]);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < rows[i].size(); ++k) {
            cols[row_ptr[i] + k] = rows[i][k].first;
            vals[row_ptr[i] + k] = rows[i][k].second;
        }
    }
    return KernelMatrix(SparseMatrix(n, n, std::move(row_ptr), std::move(cols), std::move(vals)));
}

void dump_kernel(const std::filesystem::path& stem, const KernelMatrix& k) {
    const auto& m = k.matrix();
    std::vector<double> rp(m.row_ptr().begin(), m.row_ptr().end());
    std::vector<double> ci(m.col_idx().begin(), m.col_idx().end());
    write_vector(stem.string() + ".rowptr.kvec", rp);
    write_vector(stem.string() + ".colidx.kvec", ci);
    write_vector(stem.string() + ".values.kvec", m.values());
}

KernelMatrix load_kernel(const std::filesystem::path& stem) {
    auto rp = read_vector(stem.string() + ".rowptr.kvec");
    auto ci = read_vector(stem.string() + ".colidx.kvec");
    auto va = read_vector(stem.string() + ".values.kvec");
    if (rp.empty() || ci.size() != va.size() || static_cast<std::size_t>(rp.back()) != va.size()) {
        throw FormatError(stem.string() + ": inconsistent kernel dump");
    }
    const std::size_t n = rp.size() - 1;
    std::vector<std::size_t> row_ptr(rp.begin(), rp.end());
    std::vector<std::uint32_t> cols(ci.begin(), ci.end());
    return KernelMatrix(SparseMatrix(n, n, std::move(row_ptr), std::move(cols), std::move(va)));
}

}  // namespace kinetica
