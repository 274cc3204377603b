#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "psephos/common.hpp"

namespace psephos {

namespace linalg {

// Dense symmetric positive-definite solve via Cholesky, for the small normal
// systems that show up in spline fitting and the SVM Newton step.
inline std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (d <= 0.0) throw DomainError("solve_spd: matrix not positive definite");
        d = std::sqrt(d);
        a[j * n + j] = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / d;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
        b[i] = s / a[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= a[k * n + ii] * b[k];
        b[ii] = s / a[ii * n + ii];
    }
    return b;
}

// Lawson-Hanson non-negative least squares, min ||Ax - b|| s.t. x >= 0.
// A is m x n row-major. Sizes here are tiny (n <= ~20).
inline std::vector<double> nnls(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                std::size_t n, int max_iter = 200) {
    std::vector<double> x(n, 0.0);
    std::vector<bool> passive(n, false);
    std::vector<double> w(n, 0.0);

    auto residual = [&]() {
        std::vector<double> r(m);
        for (std::size_t i = 0; i < m; ++i) {
            double s = b[i];
            for (std::size_t j = 0; j < n; ++j) s -= a[i * n + j] * x[j];
            r[i] = s;
        }
        return r;
    };

    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<double> r = residual();
        double wmax = 0.0;
        std::size_t jmax = n;
        for (std::size_t j = 0; j < n; ++j) {
            if (passive[j]) continue;
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += a[i * n + j] * r[i];
            w[j] = s;
            if (s > wmax + 1e-12) {
                wmax = s;
                jmax = j;
            }
        }
        if (jmax == n || wmax <= 1e-10) break;
        passive[jmax] = true;

        for (int inner = 0; inner < max_iter; ++inner) {
            std::vector<std::size_t> idx;
            for (std::size_t j = 0; j < n; ++j)
                if (passive[j]) idx.push_back(j);
            const std::size_t p = idx.size();
            std::vector<double> ata(p * p, 0.0), atb(p, 0.0);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t jj = 0; jj < p; ++jj) {
                    double aij = a[i * n + idx[jj]];
                    atb[jj] += aij * b[i];
                    for (std::size_t kk = 0; kk <= jj; ++kk) ata[jj * p + kk] += aij * a[i * n + idx[kk]];
                }
            }
            for (std::size_t jj = 0; jj < p; ++jj) {
                for (std::size_t kk = jj + 1; kk < p; ++kk) ata[jj * p + kk] = ata[kk * p + jj];
                ata[jj * p + jj] += 1e-12;
            }
            std::vector<double> z = solve_spd(ata, atb);
            bool all_pos = true;
            for (double v : z)
                if (v <= 0.0) all_pos = false;
            if (all_pos) {
                for (std::size_t jj = 0; jj < p; ++jj) x[idx[jj]] = z[jj];
                break;
            }
            double alpha = 1.0;
            for (std::size_t jj = 0; jj < p; ++jj) {
                if (z[jj] <= 0.0) {
                    double xj = x[idx[jj]];
                    double step = xj / (xj - z[jj]);
                    alpha = std::min(alpha, step);
                }
            }
            for (std::size_t jj = 0; jj < p; ++jj) {
                x[idx[jj]] += alpha * (z[jj] - x[idx[jj]]);
                if (x[idx[jj]] <= 1e-12) {
                    x[idx[jj]] = 0.0;
                    passive[idx[jj]] = false;
                }
            }
        }
    }
    return x;
}

}  // namespace linalg

// Cubic B-spline on a clamped knot vector.
class CubicBSpline {
public:
    CubicBSpline() = default;
    CubicBSpline(std::vector<double> knots, std::vector<double> coefs)
        : knots_(std::move(knots)), coefs_(std::move(coefs)) {
        if (knots_.size() != coefs_.size() + 4)
            throw DomainError("CubicBSpline: knot count must be coefficient count + 4");
    }

    static std::vector<double> clamped_knots(double lo, double hi, int interior) {
        if (!(hi > lo)) throw DomainError("clamped_knots: need hi > lo");
        if (interior < 0) throw DomainError("clamped_knots: interior must be >= 0");
        std::vector<double> k;
        for (int i = 0; i < 4; ++i) k.push_back(lo);
        for (int i = 1; i <= interior; ++i)
            k.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(interior + 1));
        for (int i = 0; i < 4; ++i) k.push_back(hi);
        return k;
    }

    double domain_lo() const { return knots_.front(); }
    double domain_hi() const { return knots_.back(); }
    const std::vector<double>& knots() const { return knots_; }
    const std::vector<double>& coefs() const { return coefs_; }

    // Cox-de Boor basis: values of the four possibly-nonzero cubic basis
    // functions at x, plus the index of the first one.
    static void basis(const std::vector<double>& knots, double x, std::size_t& first, double out[4]) {
        const std::size_t n_coef = knots.size() - 4;
        double lo = knots.front(), hi = knots.back();
        x = clamp(x, lo, hi);
        // span index: largest i with knots[i] <= x, within [3, n_coef - 1 + 3)
        std::size_t span = 3;
        {
            std::size_t a = 3, b = n_coef;  // spans are [3, n_coef]
            while (a + 1 < b) {
                std::size_t mid = (a + b) / 2;
                if (knots[mid] <= x)
                    a = mid;
                else
                    b = mid;
            }
            span = a;
        }
        if (span >= n_coef) span = n_coef - 1;
        double left[4], right[4];
        out[0] = 1.0;
        for (int j = 1; j <= 3; ++j) {
            left[j] = x - knots[span + 1 - j];
            right[j] = knots[span + j] - x;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                double den = right[r + 1] + left[j - r];
                double temp = den != 0.0 ? out[r] / den : 0.0;
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        first = span - 3;
    }

    double operator()(double x) const {
        std::size_t first;
        double b[4];
        basis(knots_, x, first, b);
        double v = 0.0;
        for (int i = 0; i < 4; ++i) v += b[i] * coefs_[first + i];
        return v;
    }

private:
    std::vector<double> knots_;
    std::vector<double> coefs_;
};

// Unconstrained least-squares spline fit (tiny ridge for stability).
inline CubicBSpline fit_bspline(std::span<const double> xs, std::span<const double> ys,
                                std::vector<double> knots) {
    const std::size_t n_coef = knots.size() - 4;
    if (xs.size() != ys.size() || xs.size() < n_coef)
        throw DomainError("fit_bspline: need at least as many points as coefficients");
    std::vector<double> ata(n_coef * n_coef, 0.0), atb(n_coef, 0.0);
    for (std::size_t r = 0; r < xs.size(); ++r) {
        std::size_t first;
        double b[4];
        CubicBSpline::basis(knots, xs[r], first, b);
        for (int i = 0; i < 4; ++i) {
            atb[first + i] += b[i] * ys[r];
            for (int j = 0; j < 4; ++j) ata[(first + i) * n_coef + first + j] += b[i] * b[j];
        }
    }
    for (std::size_t i = 0; i < n_coef; ++i) ata[i * n_coef + i] += 1e-10;
    return CubicBSpline(std::move(knots), linalg::solve_spd(std::move(ata), std::move(atb)));
}

// Least-squares fit with non-increasing coefficients, clamped to [lo, hi].
// Non-increasing control points are a sufficient condition for a
// non-increasing cubic B-spline, and clamping preserves that order.
// Parameterization: c_0 = u_p - u_m, c_j = c_{j-1} - u_{j+1}, all u >= 0,
// which turns the shape constraint into an NNLS problem.
inline CubicBSpline fit_bspline_nonincreasing(std::span<const double> xs, std::span<const double> ys,
                                              std::vector<double> knots, double value_lo, double value_hi) {
    const std::size_t n_coef = knots.size() - 4;
    if (xs.size() != ys.size() || xs.size() < n_coef)
        throw DomainError("fit_bspline_nonincreasing: need at least as many points as coefficients");
    const std::size_t m = xs.size();
    const std::size_t nu = n_coef + 1;  // u_p, u_m, then one drop per coefficient after the first
    std::vector<double> a(m * nu, 0.0), b(ys.begin(), ys.end());
    for (std::size_t r = 0; r < m; ++r) {
        std::size_t first;
        double basis[4];
        CubicBSpline::basis(knots, xs[r], first, basis);
        for (int i = 0; i < 4; ++i) {
            std::size_t coef_idx = first + i;
            // c_{coef_idx} = (u_p - u_m) - sum_{l <= coef_idx, l >= 1} u_{l+1}
            a[r * nu + 0] += basis[i];
            a[r * nu + 1] -= basis[i];
            for (std::size_t l = 1; l <= coef_idx; ++l) a[r * nu + 1 + l] -= basis[i];
        }
    }
    std::vector<double> u = linalg::nnls(a, b, m, nu);
    std::vector<double> coefs(n_coef);
    double c = u[0] - u[1];
    coefs[0] = c;
    for (std::size_t j = 1; j < n_coef; ++j) {
        c -= u[j + 1];
        coefs[j] = c;
    }
    for (double& v : coefs) v = clamp(v, value_lo, value_hi);
    return CubicBSpline(std::move(knots), std::move(coefs));
}

}  // namespace psephos
