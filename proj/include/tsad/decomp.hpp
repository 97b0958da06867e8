#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "tsad/arima.hpp" // kIntervalZ
#include "tsad/error.hpp"
#include "tsad/forecast.hpp"
#include "tsad/matrix.hpp"
#include "tsad/panel.hpp"

namespace tsad {

// Additive decomposition forecaster: piecewise-linear trend (hinges at the
// 0.25/0.5/0.75 quantiles of train time) plus Fourier seasonality of order
// K per period, fitted by ordinary least squares. Prediction intervals are
// the constant z * sigma with sigma the training residual std.
struct DecompFit {
    std::size_t train_begin = 0;
    double time_scale = 1.0;              // train length, normalizes trend time
    std::vector<double> changepoints;     // in normalized train time
    std::vector<std::size_t> periods;     // in steps
    std::size_t fourier_order = 0;
    Vector coef;                          // [1, tau, hinges..., sin/cos...]
    double sigma = 0.0;
    bool ridge_fallback = false;
};

namespace detail {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

inline std::size_t decomp_n_cols(const DecompFit& fit) {
    return 2 + fit.changepoints.size() +
           2 * fit.fourier_order * fit.periods.size();
}

inline void decomp_row(const DecompFit& fit, std::size_t t, double* row) {
    const double tau = (static_cast<double>(t) -
                        static_cast<double>(fit.train_begin)) /
                       fit.time_scale;
    std::size_t col = 0;
    row[col++] = 1.0;
    row[col++] = tau;
    for (double cp : fit.changepoints)
        row[col++] = tau > cp ? tau - cp : 0.0;
    for (std::size_t period : fit.periods)
        for (std::size_t k = 1; k <= fit.fourier_order; ++k) {
            const double angle = kTwoPi * static_cast<double>(k) *
                                 static_cast<double>(t) /
                                 static_cast<double>(period);
            row[col++] = std::sin(angle);
            row[col++] = std::cos(angle);
        }
}

} // namespace detail

// Fits on the observed positions of [train.begin, train.end). `observed`
// may be empty to use every position.
inline DecompFit decomp_fit(const Vector& series, TimeRange train,
                            const std::vector<std::size_t>& periods,
                            std::size_t fourier_order,
                            const std::vector<std::uint8_t>& observed = {}) {
    if (train.end > series.size()) fail("decomp", "train range exceeds series");
    std::size_t max_period = 0;
    for (std::size_t p : periods) max_period = std::max(max_period, p);
    if (max_period > 0 && train.length() < 2 * max_period)
        fail("decomp", "train range shorter than two seasonal periods");
    if (train.length() < 8) fail("decomp", "train range too short");

    DecompFit fit;
    fit.train_begin = train.begin;
    fit.time_scale = static_cast<double>(train.length());
    fit.changepoints = {0.25, 0.5, 0.75};
    fit.periods = periods;
    fit.fourier_order = periods.empty() ? 0 : fourier_order;

    std::vector<std::size_t> rows_t;
    for (std::size_t t = train.begin; t < train.end; ++t)
        if (observed.empty() || observed[t]) rows_t.push_back(t);
    const std::size_t cols = detail::decomp_n_cols(fit);
    if (rows_t.size() < cols + 2) fail("decomp", "too few observed points to fit");

    Matrix design(rows_t.size(), cols);
    Vector target(rows_t.size());
    for (std::size_t r = 0; r < rows_t.size(); ++r) {
        detail::decomp_row(fit, rows_t[r], design.row_ptr(r));
        target[r] = series[rows_t[r]];
    }
    const OlsResult ols = ols_solve(design, target);
    fit.coef = ols.coef;
    fit.ridge_fallback = ols.ridge_fallback;

    double sse = 0.0;
    for (std::size_t r = 0; r < rows_t.size(); ++r) {
        const double pred = dot(design.row_ptr(r), fit.coef.data(), cols);
        const double e = target[r] - pred;
        sse += e * e;
    }
    fit.sigma = std::sqrt(sse / static_cast<double>(rows_t.size()));
    return fit;
}

inline double decomp_predict(const DecompFit& fit, std::size_t t) {
    std::vector<double> row(detail::decomp_n_cols(fit));
    detail::decomp_row(fit, t, row.data());
    return dot(row.data(), fit.coef.data(), row.size());
}

inline ForecastSet decomp_forecast(const DecompFit& fit, TimeRange eval) {
    ForecastSet out;
    out.start = eval.begin;
    out.predictions = Matrix(1, eval.length());
    out.half_width = Matrix(1, eval.length());
    const double hw = kIntervalZ * fit.sigma;
    for (std::size_t t = eval.begin; t < eval.end; ++t) {
        out.predictions(0, t - eval.begin) = decomp_predict(fit, t);
        (*out.half_width)(0, t - eval.begin) = hw;
    }
    return out;
}

} // namespace tsad
