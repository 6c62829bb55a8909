#include "kinetica/sparse.hpp"

#include <algorithm>
#include <string>

#include "kinetica/error.hpp"

namespace kinetica {

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
                           std::vector<std::uint32_t> col_idx, std::vector<double> values)
    : rows_(rows), cols_(cols), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)),
      values_(std::move(values)) {
    if (row_ptr_.size() != rows_ + 1 || row_ptr_.front() != 0 || row_ptr_.back() != values_.size() ||
        col_idx_.size() != values_.size()) {
        throw ShapeError("inconsistent CSR arrays");
    }
    for (std::size_t r = 0; r < rows_; ++r) {
        if (row_ptr_[r + 1] < row_ptr_[r]) throw ShapeError("CSR row pointers decrease");
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
            if (col_idx_[k] >= cols_) throw ShapeError("CSR column index out of range");
            if (k > row_ptr_[r] && col_idx_[k] <= col_idx_[k - 1]) {
                throw ShapeError("CSR columns not strictly ascending in row " + std::to_string(r));
            }
        }
    }
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
    std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::size_t> ptr(rows + 1, 0);
    std::vector<std::uint32_t> idx;
    std::vector<double> val;
    idx.reserve(entries.size());
    val.reserve(entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const auto& e = entries[k];
        if (e.row >= rows || e.col >= cols) throw ShapeError("triplet outside matrix bounds");
        if (k > 0 && entries[k - 1].row == e.row && entries[k - 1].col == e.col) {
            val.back() += e.value;
            continue;
        }
        idx.push_back(e.col);
        val.push_back(e.value);
        ++ptr[e.row + 1];
    }
    for (std::size_t r = 0; r < rows; ++r) ptr[r + 1] += ptr[r];
    return SparseMatrix(rows, cols, std::move(ptr), std::move(idx), std::move(val));
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
    std::vector<std::size_t> ptr(n + 1);
    std::vector<std::uint32_t> idx(n);
    for (std::size_t i = 0; i <= n; ++i) ptr[i] = i;
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
    return SparseMatrix(n, n, std::move(ptr), std::move(idx), std::vector<double>(n, 1.0));
}

SparseMatrix SparseMatrix::transpose() const {
    std::vector<std::size_t> ptr(cols_ + 1, 0);
    for (auto c : col_idx_) ++ptr[c + 1];
    for (std::size_t c = 0; c < cols_; ++c) ptr[c + 1] += ptr[c];
    std::vector<std::size_t> next(ptr.begin(), ptr.end() - 1);
    std::vector<std::uint32_t> idx(nnz());
    std::vector<double> val(nnz());
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
            const auto dst = next[col_idx_[k]]++;
            idx[dst] = static_cast<std::uint32_t>(r);
            val[dst] = values_[k];
        }
    }
    return SparseMatrix(cols_, rows_, std::move(ptr), std::move(idx), std::move(val));
}

std::vector<double> SparseMatrix::row_sums() const {
    std::vector<double> s(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s[r] += values_[k];
    }
    return s;
}

}  // namespace kinetica
