#pragma once

// Minimal dense-matrix support: just what PCA and the moment-based
// dissimilarity sweep need, plus a symmetric eigensolver.

#include <cstddef>
#include <vector>

namespace xmd {

struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(size_t i, size_t j) { return data[i * cols + j]; }
    double at(size_t i, size_t j) const { return data[i * cols + j]; }
};

struct SymEig {
    std::vector<double> values;            // descending
    std::vector<std::vector<double>> vectors;  // vectors[i] pairs with values[i], orthonormal
};

// Eigendecomposition of a symmetric matrix: Householder tridiagonalization
// followed by implicit-shift QL. Input is copied; symmetry is assumed.
SymEig sym_eig(const Matrix& a);

}  // namespace xmd
