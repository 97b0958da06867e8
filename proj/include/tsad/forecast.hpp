#pragma once

#include <optional>

#include "tsad/matrix.hpp"
#include "tsad/panel.hpp"

namespace tsad {

// One-step-ahead predictions over an evaluation range. Column c holds the
// prediction for global time index start + c. Classical baselines attach
// interval half-widths; the flag rule |y - yhat| > half_width uses them.
struct ForecastSet {
    std::size_t start = 0;
    Matrix predictions;               // [n_nodes x range_len]
    std::optional<Matrix> half_width; // same shape when present

    TimeRange range() const { return {start, start + predictions.cols()}; }
};

} // namespace tsad
