#pragma once

#include <filesystem>

#include "kinetica/core.hpp"
#include "kinetica/sparse.hpp"

namespace kinetica {

struct KernelConfig {
    int patch_radius = 1;   // per non-singleton axis
    int window_radius = 3;  // per non-singleton axis
    /// Neighbours kept per row; 0 picks 50 for 3D grids and 20 otherwise.
    std::size_t k_neighbors = 0;
    /// Divide each row by its sum. Off by default.
    bool normalize_rows = false;

    std::size_t resolved_neighbors(const ImageGrid& grid) const;
};

/// N x N_f patch features with edge replication; N_f = (2r + 1)^d over the
/// grid's non-singleton axes. Patch offsets are ordered z, y, x (x fastest).
Matrix extract_features(const PriorImage& z, const KernelConfig& cfg);

/// Population variance of the prior.
double prior_variance(const PriorImage& z);

/// Sparse nonlocal similarity operator with its transpose materialized.
class KernelMatrix {
public:
    KernelMatrix() = default;
    explicit KernelMatrix(SparseMatrix k);

    static KernelMatrix identity(std::size_t n) { return KernelMatrix(SparseMatrix::identity(n)); }

    const SparseMatrix& matrix() const noexcept { return k_; }
    const SparseMatrix& transpose_matrix() const noexcept { return kt_; }
    std::size_t size() const noexcept { return k_.rows(); }

    /// K x, columnwise on an N x C matrix.
    Matrix apply(const Matrix& x) const;
    /// K^T g.
    Matrix apply_transpose(const Matrix& g) const;

private:
    SparseMatrix k_;
    SparseMatrix kt_;
};

/// k_ij = exp(-|f_i - f_j|^2 / (2 N_f sigma^2)) over the search window, with
/// the k largest kept per row (self first, ties to the smaller index). A
/// constant prior falls back to equal weights 1/k within the window.
KernelMatrix build_kernel(const PriorImage& z, const KernelConfig& cfg);

/// Writes <stem>.rowptr.kvec, <stem>.colidx.kvec and <stem>.values.kvec.
void dump_kernel(const std::filesystem::path& stem, const KernelMatrix& k);
KernelMatrix load_kernel(const std::filesystem::path& stem);

}  // namespace kinetica
