#include "xmd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace xmd {

namespace {

double hypot2(double a, double b) { return std::sqrt(a * a + b * b); }

// Householder reduction of a symmetric matrix to tridiagonal form,
// accumulating the transform in `v` (classic tred2 scheme).
void tridiagonalize(std::vector<std::vector<double>>& v, std::vector<double>& d,
                    std::vector<double>& e) {
    const size_t n = d.size();
    for (size_t j = 0; j < n; ++j) d[j] = v[n - 1][j];

    for (size_t i = n - 1; i > 0; --i) {
        double scale = 0.0;
        double h = 0.0;
        for (size_t k = 0; k < i; ++k) scale += std::fabs(d[k]);
        if (scale == 0.0) {
            e[i] = d[i - 1];
            for (size_t j = 0; j < i; ++j) {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for (size_t k = 0; k < i; ++k) {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            double f = d[i - 1];
            double g = std::sqrt(h);
            if (f > 0) g = -g;
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for (size_t j = 0; j < i; ++j) e[j] = 0.0;

            for (size_t j = 0; j < i; ++j) {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for (size_t k = j + 1; k <= i - 1; ++k) {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for (size_t j = 0; j < i; ++j) {
                e[j] /= h;
                f += e[j] * d[j];
            }
            const double hh = f / (h + h);
            for (size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
            for (size_t j = 0; j < i; ++j) {
                f = d[j];
                g = e[j];
                for (size_t k = j; k <= i - 1; ++k) v[k][j] -= (f * e[k] + g * d[k]);
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }

    for (size_t i = 0; i < n - 1; ++i) {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        const double h = d[i + 1];
        if (h != 0.0) {
            for (size_t k = 0; k <= i; ++k) d[k] = v[k][i + 1] / h;
            for (size_t j = 0; j <= i; ++j) {
                double g = 0.0;
                for (size_t k = 0; k <= i; ++k) g += v[k][i + 1] * v[k][j];
                for (size_t k = 0; k <= i; ++k) v[k][j] -= g * d[k];
            }
        }
        for (size_t k = 0; k <= i; ++k) v[k][i + 1] = 0.0;
    }
    for (size_t j = 0; j < n; ++j) {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

// Implicit-shift QL on the tridiagonal form (tql2 scheme), eigenvalues
// ascending on return, eigenvectors in the columns of `v`.
void ql_implicit(std::vector<std::vector<double>>& v, std::vector<double>& d,
                 std::vector<double>& e) {
    const size_t n = d.size();
    for (size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;

    double f = 0.0;
    double tst1 = 0.0;
    const double eps = std::pow(2.0, -52.0);
    for (size_t l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::fabs(d[l]) + std::fabs(e[l]));
        size_t m = l;
        while (m < n) {
            if (std::fabs(e[m]) <= eps * tst1) break;
            ++m;
        }
        if (m > l) {
            int iter = 0;
            do {
                if (++iter > 200) throw std::runtime_error("sym_eig: QL failed to converge");
                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = hypot2(p, 1.0);
                if (p < 0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                const double dl1 = d[l + 1];
                double h = g - d[l];
                for (size_t i = l + 2; i < n; ++i) d[i] -= h;
                f += h;

                p = d[m];
                double c = 1.0;
                double c2 = c, c3 = c;
                const double el1 = e[l + 1];
                double s = 0.0, s2 = 0.0;
                for (size_t i = m - 1; i + 1 > l; --i) {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = hypot2(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for (size_t k = 0; k < n; ++k) {
                        h = v[k][i + 1];
                        v[k][i + 1] = s * v[k][i] + c * h;
                        v[k][i] = c * v[k][i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::fabs(e[l]) > eps * tst1);
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

}  // namespace

SymEig sym_eig(const Matrix& a) {
    if (a.rows != a.cols) throw std::invalid_argument("sym_eig: matrix not square");
    const size_t n = a.rows;
    SymEig result;
    if (n == 0) return result;

    std::vector<std::vector<double>> v(n, std::vector<double>(n));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) v[i][j] = a.at(i, j);
    std::vector<double> d(n), e(n, 0.0);

    if (n == 1) {
        result.values = {a.at(0, 0)};
        result.vectors = {{1.0}};
        return result;
    }

    tridiagonalize(v, d, e);
    ql_implicit(v, d, e);

    // Ascending from QL; report descending with matching columns.
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t x, size_t y) { return d[x] > d[y]; });

    result.values.resize(n);
    result.vectors.assign(n, std::vector<double>(n));
    for (size_t r = 0; r < n; ++r) {
        result.values[r] = d[order[r]];
        for (size_t k = 0; k < n; ++k) result.vectors[r][k] = v[k][order[r]];
    }
    return result;
}

}  // namespace xmd
