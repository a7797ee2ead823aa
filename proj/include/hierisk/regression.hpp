#pragma once

// Cross-sectional least squares for the backward induction: one factorization
// per time step, reused for the continuation value and every noise component.
//
// The basis is all monomials of total degree <= degree in the standardized
// coordinates. Coordinates that are constant across the sample are dropped,
// which at step 0 (all paths share x0) collapses the basis to the intercept,
// so projecting there returns the sample mean. With an intercept always
// present, projections preserve the sample mean exactly; the solvers rely on
// both properties.

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "hierisk/common.hpp"

namespace hierisk {

class StepRegression {
public:
    // x points at the first sample's coordinates; consecutive samples are
    // `stride` doubles apart, each d contiguous values.
    StepRegression(const double* x, std::size_t stride, int n, int d, int degree)
        : n_(n), d_(d) {
        if (n < 1 || d < 1 || degree < 0) throw SolveError("regression needs n >= 1, d >= 1, degree >= 0");

        std::vector<double> mean(d, 0.0), sd(d, 0.0);
        for (int p = 0; p < n; ++p)
            for (int i = 0; i < d; ++i) mean[i] += x[std::size_t(p) * stride + i];
        for (int i = 0; i < d; ++i) mean[i] /= n;
        for (int p = 0; p < n; ++p)
            for (int i = 0; i < d; ++i) {
                const double dev = x[std::size_t(p) * stride + i] - mean[i];
                sd[i] += dev * dev;
            }
        std::vector<bool> active(d);
        for (int i = 0; i < d; ++i) {
            sd[i] = std::sqrt(sd[i] / std::max(1, n - 1));
            active[i] = sd[i] > 1e-12 * (1.0 + std::fabs(mean[i]));
            if (!active[i]) sd[i] = 1.0;
        }

        std::vector<int> cur(d, 0);
        enumerate(0, degree, cur, active);

        const int F = int(expo_.size());
        phi_.resize(n, F);
        std::vector<double> pw(std::size_t(d) * (degree + 1));
        for (int p = 0; p < n; ++p) {
            for (int i = 0; i < d; ++i) {
                const double s = (x[std::size_t(p) * stride + i] - mean[i]) / sd[i];
                pw[std::size_t(i) * (degree + 1)] = 1.0;
                for (int e = 1; e <= degree; ++e)
                    pw[std::size_t(i) * (degree + 1) + e] = pw[std::size_t(i) * (degree + 1) + e - 1] * s;
            }
            for (int f = 0; f < F; ++f) {
                double val = 1.0;
                for (int i = 0; i < d; ++i) val *= pw[std::size_t(i) * (degree + 1) + expo_[f][i]];
                phi_(p, f) = val;
            }
        }
        qr_.compute(phi_);
    }

    int features() const { return int(expo_.size()); }
    int samples() const { return n_; }

    void project(const double* y, double* out) const {
        Eigen::Map<const Eigen::VectorXd> ym(y, n_);
        const Eigen::VectorXd c = qr_.solve(ym);
        Eigen::Map<Eigen::VectorXd>(out, n_) = phi_ * c;
    }

    std::vector<double> project(const std::vector<double>& y) const {
        if (int(y.size()) != n_) throw SolveError("regression target length mismatch");
        std::vector<double> out(n_);
        project(y.data(), out.data());
        return out;
    }

private:
    void enumerate(int coord, int remaining, std::vector<int>& cur, const std::vector<bool>& active) {
        if (coord == d_) {
            expo_.push_back(cur);
            return;
        }
        const int cap = active[coord] ? remaining : 0;
        for (int e = 0; e <= cap; ++e) {
            cur[coord] = e;
            enumerate(coord + 1, remaining - e, cur, active);
        }
        cur[coord] = 0;
    }

    int n_, d_;
    std::vector<std::vector<int>> expo_;
    Eigen::MatrixXd phi_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
};

}  // namespace hierisk
