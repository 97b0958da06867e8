#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "tsad/error.hpp"
#include "tsad/forecast.hpp"
#include "tsad/matrix.hpp"

namespace tsad {

// ARIMA(p,d,q) with optional additive seasonal terms (P,D,Q,s): seasonal
// lags enter the regressions as extra lags at multiples of s rather than as
// multiplied polynomials. Estimation is Hannan-Rissanen — a long
// autoregression estimates the innovations, then the differenced series is
// regressed on its own lags and lagged innovation estimates — which is
// closed-form and deterministic, unlike full maximum likelihood.
struct ArimaOrder {
    std::size_t p = 0;
    std::size_t d = 0;
    std::size_t q = 0;
    std::size_t seasonal_p = 0;
    std::size_t seasonal_d = 0;
    std::size_t seasonal_q = 0;
    std::size_t season = 0; // 0 = non-seasonal

    void validate() const {
        if (p > 3 || d > 1 || q > 2) fail("arima", "order outside p<=3, d<=1, q<=2");
        const bool seasonal = seasonal_p || seasonal_d || seasonal_q;
        if (seasonal && season < 2) fail("arima", "seasonal order requires s >= 2");
        if (seasonal_d > 1) fail("arima", "seasonal differencing limited to D <= 1");
    }

    std::size_t param_count() const {
        return p + q + seasonal_p + seasonal_q + 1;
    }
};

struct ArimaFit {
    ArimaOrder order;
    std::vector<std::size_t> ar_lags; // {1..p} then {s..P*s}
    std::vector<std::size_t> ma_lags; // {1..q} then {s..Q*s}
    Vector ar_coef;                   // aligned with ar_lags
    Vector ma_coef;                   // aligned with ma_lags
    double intercept = 0.0;
    double sigma2 = 0.0; // innovation variance, SSE / effective n
    double aic = 0.0;    // n_eff * ln(sigma2) + 2 * (p+q+P+Q+1)
    bool mean_fallback = false; // richer candidates were singular
};

inline constexpr double kIntervalZ = 1.959964; // two-sided 95%

namespace detail {

inline Vector difference(const Vector& series, std::size_t d, std::size_t big_d,
                         std::size_t season) {
    Vector w = series;
    for (std::size_t r = 0; r < d; ++r) {
        Vector next(w.size() - 1);
        for (std::size_t t = 1; t < w.size(); ++t) next[t - 1] = w[t] - w[t - 1];
        w = std::move(next);
    }
    for (std::size_t r = 0; r < big_d; ++r) {
        if (w.size() <= season) fail("arima", "series too short for seasonal differencing");
        Vector next(w.size() - season);
        for (std::size_t t = season; t < w.size(); ++t)
            next[t - season] = w[t] - w[t - season];
        w = std::move(next);
    }
    return w;
}

inline std::vector<std::size_t> make_lags(std::size_t base, std::size_t seasonal,
                                          std::size_t season) {
    std::vector<std::size_t> lags;
    for (std::size_t k = 1; k <= base; ++k) lags.push_back(k);
    for (std::size_t k = 1; k <= seasonal; ++k) lags.push_back(k * season);
    return lags;
}

// Innovations from a long autoregression; positions before the long order
// have no estimate and stay NaN.
inline Vector long_ar_innovations(const Vector& w, std::size_t long_order) {
    const std::size_t n = w.size();
    Matrix design(n - long_order, long_order + 1);
    Vector target(n - long_order);
    for (std::size_t t = long_order; t < n; ++t) {
        const std::size_t row = t - long_order;
        design(row, 0) = 1.0;
        for (std::size_t k = 1; k <= long_order; ++k)
            design(row, k) = w[t - k];
        target[row] = w[t];
    }
    const OlsResult ols = ols_solve(design, target);
    Vector innovations(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = long_order; t < n; ++t) {
        double pred = ols.coef[0];
        for (std::size_t k = 1; k <= long_order; ++k)
            pred += ols.coef[k] * w[t - k];
        innovations[t] = w[t] - pred;
    }
    return innovations;
}

struct StageTwoFit {
    Vector coef; // [intercept, ar..., ma...]
    double sigma2 = 0.0;
    std::size_t n_eff = 0;
    bool singular = false;
};

inline StageTwoFit stage_two(const Vector& w, const Vector& innovations,
                             const std::vector<std::size_t>& ar_lags,
                             const std::vector<std::size_t>& ma_lags,
                             std::size_t start) {
    StageTwoFit degenerate;
    degenerate.singular = true;
    const std::size_t n = w.size();
    if (start >= n) return degenerate;
    const std::size_t rows = n - start;
    const std::size_t cols = 1 + ar_lags.size() + ma_lags.size();
    if (rows < cols + 2) return degenerate;
    Matrix design(rows, cols);
    Vector target(rows);
    for (std::size_t t = start; t < n; ++t) {
        const std::size_t row = t - start;
        std::size_t col = 0;
        design(row, col++) = 1.0;
        for (std::size_t lag : ar_lags) design(row, col++) = w[t - lag];
        for (std::size_t lag : ma_lags) design(row, col++) = innovations[t - lag];
        target[row] = w[t];
    }
    const OlsResult ols = ols_solve(design, target);
    StageTwoFit fit;
    fit.singular = ols.ridge_fallback;
    fit.coef = ols.coef;
    double sse = 0.0;
    for (std::size_t t = start; t < n; ++t) {
        const std::size_t row = t - start;
        double pred = 0.0;
        for (std::size_t c = 0; c < cols; ++c) pred += ols.coef[c] * design(row, c);
        const double e = target[row] - pred;
        sse += e * e;
    }
    fit.sigma2 = sse / static_cast<double>(rows);
    fit.n_eff = rows;
    return fit;
}

} // namespace detail

// Fits one order by Hannan-Rissanen. Throws only on structural problems;
// singular regressions surface through the returned flag.
inline ArimaFit arima_fit_order(const Vector& series, const ArimaOrder& order,
                                bool& singular) {
    order.validate();
    const Vector w =
        detail::difference(series, order.d, order.seasonal_d, order.season);
    ArimaFit fit;
    fit.order = order;
    fit.ar_lags = detail::make_lags(order.p, order.seasonal_p, order.season);
    fit.ma_lags = detail::make_lags(order.q, order.seasonal_q, order.season);

    const std::size_t max_ar =
        fit.ar_lags.empty() ? 0 : fit.ar_lags.back();
    const std::size_t max_ma =
        fit.ma_lags.empty() ? 0 : fit.ma_lags.back();

    Vector innovations;
    std::size_t start = max_ar;
    if (!fit.ma_lags.empty()) {
        std::size_t long_order = std::max<std::size_t>(10, 2 * std::max(max_ar, max_ma));
        long_order = std::min(long_order, w.size() / 3);
        if (long_order < 1) {
            singular = true;
            return fit;
        }
        innovations = detail::long_ar_innovations(w, long_order);
        start = std::max(start, long_order + max_ma);
    }

    const detail::StageTwoFit stage =
        detail::stage_two(w, innovations, fit.ar_lags, fit.ma_lags, start);
    singular = stage.singular;
    if (stage.singular) return fit;

    fit.intercept = stage.coef[0];
    fit.ar_coef.assign(stage.coef.begin() + 1,
                       stage.coef.begin() + 1 + fit.ar_lags.size());
    fit.ma_coef.assign(stage.coef.begin() + 1 + fit.ar_lags.size(),
                       stage.coef.end());
    fit.sigma2 = stage.sigma2;
    fit.aic = static_cast<double>(stage.n_eff) *
                  std::log(std::max(stage.sigma2, 1e-300)) +
              2.0 * static_cast<double>(order.param_count());
    return fit;
}

// Default grid: p in 0..3, d in 0..1, q in 0..2; when a seasonal period is
// declared, a few seasonal variants are added per base order.
inline std::vector<ArimaOrder> default_arima_grid(std::size_t season = 0) {
    std::vector<ArimaOrder> grid;
    for (std::size_t d = 0; d <= 1; ++d)
        for (std::size_t p = 0; p <= 3; ++p)
            for (std::size_t q = 0; q <= 2; ++q)
                grid.push_back({p, d, q, 0, 0, 0, 0});
    if (season >= 2) {
        const std::size_t base_end = grid.size();
        const std::size_t variants[][3] = {{0, 1, 0}, {1, 0, 0}, {1, 1, 0}};
        for (std::size_t g = 0; g < base_end; ++g)
            for (const auto& v : variants) {
                ArimaOrder o = grid[g];
                o.seasonal_p = v[0];
                o.seasonal_d = v[1];
                o.seasonal_q = v[2];
                o.season = season;
                grid.push_back(o);
            }
    }
    return grid;
}

// Best-AIC fit over the grid. Ties break toward fewer parameters, then grid
// order. Orders whose regression is singular are skipped; if every
// candidate with parameters is singular the mean model remains and the fit
// is flagged.
inline ArimaFit arima_fit(const Vector& series,
                          const std::vector<ArimaOrder>& orders) {
    if (orders.empty()) fail("arima", "empty order grid");
    std::size_t max_p = 0, max_q = 0;
    for (const auto& o : orders) {
        max_p = std::max(max_p, o.p);
        max_q = std::max(max_q, o.q);
    }
    if (series.size() < 10 * (max_p + max_q + 1))
        fail("arima", "series too short for the order grid (need >= " +
                          std::to_string(10 * (max_p + max_q + 1)) + " points)");

    bool have_best = false;
    bool any_singular = false;
    ArimaFit best;
    for (const auto& order : orders) {
        bool singular = false;
        ArimaFit fit = arima_fit_order(series, order, singular);
        if (singular) {
            any_singular = true;
            continue;
        }
        const bool better =
            !have_best || fit.aic < best.aic ||
            (fit.aic == best.aic &&
             fit.order.param_count() < best.order.param_count());
        if (better) {
            best = fit;
            have_best = true;
        }
    }
    if (!have_best) {
        // Constant series: every lagged regression is collinear. Fall back
        // to the mean model.
        bool singular = false;
        best = arima_fit_order(series, ArimaOrder{}, singular);
        best.mean_fallback = true;
    } else if (any_singular && best.order.param_count() == 1) {
        best.mean_fallback = true;
    }
    return best;
}

// Rolling one-step forecasts over [eval.begin, eval.end) of the original
// series, using true past observations only (no re-fitting). Innovation
// estimates roll forward from the start of the differenced series with
// unavailable history treated as zero. Interval half-width is the constant
// z * sigma-hat.
inline ForecastSet arima_forecast(const ArimaFit& fit, const Vector& series,
                                  TimeRange eval) {
    const ArimaOrder& o = fit.order;
    if (eval.end > series.size()) fail("arima", "eval range exceeds series");
    const std::size_t diff_offset = o.d + o.seasonal_d * o.season;
    const Vector w = detail::difference(series, o.d, o.seasonal_d, o.season);
    if (eval.begin < diff_offset + 1)
        fail("arima", "eval range starts before differencing history exists");

    Vector innovations(w.size(), 0.0);
    Vector what(w.size(), 0.0);
    for (std::size_t t = 0; t < w.size(); ++t) {
        double pred = fit.intercept;
        for (std::size_t k = 0; k < fit.ar_lags.size(); ++k) {
            const std::size_t lag = fit.ar_lags[k];
            if (t >= lag) pred += fit.ar_coef[k] * w[t - lag];
        }
        for (std::size_t k = 0; k < fit.ma_lags.size(); ++k) {
            const std::size_t lag = fit.ma_lags[k];
            if (t >= lag) pred += fit.ma_coef[k] * innovations[t - lag];
        }
        what[t] = pred;
        innovations[t] = w[t] - pred;
    }

    ForecastSet out;
    out.start = eval.begin;
    out.predictions = Matrix(1, eval.length());
    out.half_width = Matrix(1, eval.length());
    const double hw = kIntervalZ * std::sqrt(std::max(fit.sigma2, 0.0));
    for (std::size_t t = eval.begin; t < eval.end; ++t) {
        // Undo the differencing with true past values.
        const std::size_t wi = t - diff_offset;
        double y = what[wi];
        if (o.d == 1) y += series[t - 1];
        if (o.seasonal_d == 1) {
            y += series[t - o.season];
            if (o.d == 1) y -= series[t - 1 - o.season];
        }
        out.predictions(0, t - eval.begin) = y;
        (*out.half_width)(0, t - eval.begin) = hw;
    }
    return out;
}

} // namespace tsad
