#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "hierisk/regression.hpp"
#include "hierisk/rng.hpp"

using namespace hierisk;

namespace {
std::vector<double> gaussian_sample(int n, int d, std::uint64_t seed) {
    const CounterRng rng(seed);
    std::vector<double> x(std::size_t(n) * d);
    for (int p = 0; p < n; ++p)
        for (int i = 0; i < d; ++i) x[std::size_t(p) * d + i] = rng.normal(p, 0, i);
    return x;
}
}  // namespace

TEST(Regression, RecoversPolynomialInSpan) {
    const int n = 2000;
    std::vector<double> x = gaussian_sample(n, 1, 1);
    std::vector<double> y(n);
    for (int p = 0; p < n; ++p) y[p] = 2.0 + 3.0 * x[p] + 0.5 * x[p] * x[p];
    StepRegression reg(x.data(), 1, n, 1, 2);
    EXPECT_EQ(reg.features(), 3);
    std::vector<double> fit = reg.project(y);
    for (int p = 0; p < n; ++p) ASSERT_NEAR(fit[p], y[p], 1e-9);
}

TEST(Regression, PreservesSampleMean) {
    const int n = 5000;
    std::vector<double> x = gaussian_sample(n, 1, 2);
    std::vector<double> y(n);
    for (int p = 0; p < n; ++p) y[p] = std::exp(0.5 * x[p]) + 0.1 * x[p];  // not in the span
    StepRegression reg(x.data(), 1, n, 1, 2);
    std::vector<double> fit = reg.project(y);
    double my = 0, mf = 0;
    for (int p = 0; p < n; ++p) {
        my += y[p];
        mf += fit[p];
    }
    EXPECT_NEAR(mf / n, my / n, 1e-12 * (1.0 + std::fabs(my / n)));
}

TEST(Regression, DegenerateSampleCollapsesToMean) {
    const int n = 100;
    std::vector<double> x(n, 1.37);  // every sample identical, like step 0 of an ensemble
    std::vector<double> y(n);
    for (int p = 0; p < n; ++p) y[p] = double(p);
    StepRegression reg(x.data(), 1, n, 1, 4);
    EXPECT_EQ(reg.features(), 1);
    std::vector<double> fit = reg.project(y);
    const double want = (n - 1) / 2.0;
    for (int p = 0; p < n; ++p) ASSERT_NEAR(fit[p], want, 1e-10);
}

TEST(Regression, FiltersIndependentNoise) {
    // Target = x + independent noise; the projection should land near x.
    const int n = 50000;
    const CounterRng rng(3);
    std::vector<double> x(n), y(n);
    for (int p = 0; p < n; ++p) {
        x[p] = rng.normal(p, 0, 0);
        y[p] = x[p] + rng.normal(p, 0, 1);
    }
    StepRegression reg(x.data(), 1, n, 1, 3);
    std::vector<double> fit = reg.project(y);
    double mse = 0;
    for (int p = 0; p < n; ++p) {
        const double e = fit[p] - x[p];
        mse += e * e;
    }
    EXPECT_LT(std::sqrt(mse / n), 0.05);
}

TEST(Regression, CrossTermsInTwoDimensions) {
    const int n = 4000;
    std::vector<double> x = gaussian_sample(n, 2, 4);
    std::vector<double> y(n);
    for (int p = 0; p < n; ++p) y[p] = x[2 * p] * x[2 * p + 1] - 0.3 * x[2 * p];
    StepRegression reg(x.data(), 2, n, 2, 2);
    EXPECT_EQ(reg.features(), 6);  // 1, x1, x2, x1^2, x1 x2, x2^2
    std::vector<double> fit = reg.project(y);
    for (int p = 0; p < n; ++p) ASSERT_NEAR(fit[p], y[p], 1e-9);
}

TEST(Regression, DeterministicRerun) {
    const int n = 3000;
    std::vector<double> x = gaussian_sample(n, 1, 5);
    std::vector<double> y(n);
    for (int p = 0; p < n; ++p) y[p] = std::tanh(x[p]) + 0.2;
    StepRegression a(x.data(), 1, n, 1, 2);
    StepRegression b(x.data(), 1, n, 1, 2);
    std::vector<double> fa = a.project(y), fb = b.project(y);
    EXPECT_EQ(fa, fb);
}

TEST(Regression, StridedAccess) {
    // Same data viewed directly and through a stride-3 layout must agree.
    const int n = 500;
    std::vector<double> dense = gaussian_sample(n, 1, 6);
    std::vector<double> strided(std::size_t(n) * 3, -99.0);
    for (int p = 0; p < n; ++p) strided[std::size_t(p) * 3] = dense[p];
    std::vector<double> y(n);
    for (int p = 0; p < n; ++p) y[p] = dense[p] * dense[p];
    StepRegression a(dense.data(), 1, n, 1, 2);
    StepRegression b(strided.data(), 3, n, 1, 2);
    EXPECT_EQ(a.project(y), b.project(y));
}
