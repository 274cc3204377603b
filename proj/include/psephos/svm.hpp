#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "psephos/bspline.hpp"
#include "psephos/common.hpp"

namespace psephos {

// Soft-margin SVM with the inhomogeneous cubic polynomial kernel
// K(a, b) = (1 + a.b)^3, trained in the primal with a squared hinge loss.
// The kernel's feature space for low-dimensional inputs is small (all
// monomials of total degree <= 3, weighted by square roots of the expansion
// coefficients), so the explicit map plus a Newton solver is exact,
// deterministic, and fast regardless of the training set size.
class PolySvm {
public:
    struct Options {
        double c = 1.0;          // soft-margin weight
        int max_newton = 60;
        double tol = 1e-10;
    };

    PolySvm() = default;

    static std::vector<std::array<int, 4>> monomials(std::size_t dims) {
        // exponent vectors with total degree 1..3 for up to 4 input dims
        if (dims == 0 || dims > 4) throw DomainError("PolySvm: supports 1..4 input dimensions");
        std::vector<std::array<int, 4>> out;
        std::array<int, 4> e{0, 0, 0, 0};
        std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int left) {
            if (pos == dims) {
                int total = 0;
                for (std::size_t i = 0; i < dims; ++i) total += e[i];
                if (total >= 1) out.push_back(e);
                return;
            }
            for (int k = 0; k <= left; ++k) {
                e[pos] = k;
                rec(pos + 1, left - k);
            }
            e[pos] = 0;
        };
        rec(0, 3);
        return out;
    }

    void train(std::span<const double> x, std::size_t dims, std::span<const int> labels, const Options& opt) {
        const std::size_t n = labels.size();
        if (n < 2 || x.size() != n * dims) throw DomainError("PolySvm::train: shape mismatch");
        bool pos = false, neg = false;
        for (int y : labels) (y > 0 ? pos : neg) = true;
        if (!pos || !neg) throw ValidationError("PolySvm::train: both labels must be present");

        dims_ = dims;
        mono_ = monomials(dims);
        mean_.assign(dims, 0.0);
        scale_.assign(dims, 1.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < dims; ++d) mean_[d] += x[i * dims + d];
        for (double& m : mean_) m /= static_cast<double>(n);
        std::vector<double> var(dims, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < dims; ++d) {
                double c = x[i * dims + d] - mean_[d];
                var[d] += c * c;
            }
        for (std::size_t d = 0; d < dims; ++d)
            scale_[d] = var[d] > 0.0 ? std::sqrt(var[d] / static_cast<double>(n)) : 1.0;

        // kernel-expansion weights: sqrt(binom(3, k) * multinom(k, exponents))
        weights_.resize(mono_.size());
        for (std::size_t j = 0; j < mono_.size(); ++j) {
            int total = 0;
            double multinom = 1.0;
            int used = 0;
            for (std::size_t d = 0; d < dims; ++d) {
                total += mono_[j][d];
                for (int r = 0; r < mono_[j][d]; ++r) multinom *= static_cast<double>(++used) / (r + 1.0);
            }
            static const double binom3[4] = {1.0, 3.0, 3.0, 1.0};
            weights_[j] = std::sqrt(binom3[total] * multinom);
        }

        const std::size_t f = mono_.size();
        std::vector<double> phi(n * f);
        std::vector<double> row(dims);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < dims; ++d) row[d] = (x[i * dims + d] - mean_[d]) / scale_[d];
            expand(row, &phi[i * f]);
        }

        // Newton iterations on 0.5 ||w||^2 + C sum max(0, 1 - y f)^2
        const std::size_t p = f + 1;  // + unregularized bias
        w_.assign(f, 0.0);
        bias_ = 0.0;
        std::vector<double> fx(n, 0.0);
        double obj = objective(phi, labels, fx, opt.c);
        for (int it = 0; it < opt.max_newton; ++it) {
            std::vector<double> grad(p, 0.0), hess(p * p, 0.0);
            for (std::size_t j = 0; j < f; ++j) {
                grad[j] = w_[j];
                hess[j * p + j] = 1.0;
            }
            hess[f * p + f] = 1e-10;
            for (std::size_t i = 0; i < n; ++i) {
                double margin = 1.0 - labels[i] * fx[i];
                if (margin <= 0.0) continue;
                double g = 2.0 * opt.c * (fx[i] - static_cast<double>(labels[i]));
                const double* ph = &phi[i * f];
                for (std::size_t j = 0; j < f; ++j) grad[j] += g * ph[j];
                grad[f] += g;
                for (std::size_t j = 0; j < f; ++j) {
                    double hj = 2.0 * opt.c * ph[j];
                    for (std::size_t k = 0; k <= j; ++k) hess[j * p + k] += hj * ph[k];
                    hess[f * p + j] += hj;
                }
                hess[f * p + f] += 2.0 * opt.c;
            }
            for (std::size_t j = 0; j < p; ++j)
                for (std::size_t k = j + 1; k < p; ++k) hess[j * p + k] = hess[k * p + j];
            double gnorm = 0.0;
            for (double g : grad) gnorm += g * g;
            if (gnorm < opt.tol * opt.tol) break;
            std::vector<double> rhs(p);
            for (std::size_t j = 0; j < p; ++j) rhs[j] = -grad[j];
            std::vector<double> step = linalg::solve_spd(hess, rhs);

            double t = 1.0;
            std::vector<double> w_try(f);
            std::vector<double> fx_try(n);
            bool improved = false;
            for (int ls = 0; ls < 30; ++ls) {
                for (std::size_t j = 0; j < f; ++j) w_try[j] = w_[j] + t * step[j];
                double b_try = bias_ + t * step[f];
                for (std::size_t i = 0; i < n; ++i) {
                    double s = b_try;
                    const double* ph = &phi[i * f];
                    for (std::size_t j = 0; j < f; ++j) s += w_try[j] * ph[j];
                    fx_try[i] = s;
                }
                double obj_try = 0.0;
                for (std::size_t j = 0; j < f; ++j) obj_try += 0.5 * w_try[j] * w_try[j];
                for (std::size_t i = 0; i < n; ++i) {
                    double m = std::max(0.0, 1.0 - labels[i] * fx_try[i]);
                    obj_try += opt.c * m * m;
                }
                if (obj_try < obj - 1e-14 * (1.0 + std::fabs(obj))) {
                    w_ = w_try;
                    bias_ = b_try;
                    fx = fx_try;
                    obj = obj_try;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if (!improved) break;
        }
    }

    double decision(std::span<const double> x) const {
        std::vector<double> row(dims_);
        for (std::size_t d = 0; d < dims_; ++d) row[d] = (x[d] - mean_[d]) / scale_[d];
        std::vector<double> phi(mono_.size());
        expand(row, phi.data());
        double s = bias_;
        for (std::size_t j = 0; j < phi.size(); ++j) s += w_[j] * phi[j];
        return s;
    }

    bool trained() const { return !w_.empty(); }

private:
    double objective(const std::vector<double>& phi, std::span<const int> labels, std::vector<double>& fx,
                     double c) const {
        const std::size_t f = mono_.size();
        const std::size_t n = labels.size();
        double obj = 0.0;
        for (std::size_t j = 0; j < f; ++j) obj += 0.5 * w_[j] * w_[j];
        for (std::size_t i = 0; i < n; ++i) {
            double s = bias_;
            const double* ph = &phi[i * f];
            for (std::size_t j = 0; j < f; ++j) s += w_[j] * ph[j];
            fx[i] = s;
            double m = std::max(0.0, 1.0 - labels[i] * s);
            obj += c * m * m;
        }
        return obj;
    }

    void expand(std::span<const double> z, double* out) const {
        for (std::size_t j = 0; j < mono_.size(); ++j) {
            double v = weights_[j];
            for (std::size_t d = 0; d < dims_; ++d)
                for (int r = 0; r < mono_[j][d]; ++r) v *= z[d];
            out[j] = v;
        }
    }

    std::size_t dims_ = 0;
    std::vector<std::array<int, 4>> mono_;
    std::vector<double> weights_;
    std::vector<double> mean_, scale_;
    std::vector<double> w_;
    double bias_ = 0.0;
};

}  // namespace psephos
