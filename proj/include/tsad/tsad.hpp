#pragma once

#include "tsad/arima.hpp"
#include "tsad/data.hpp"
#include "tsad/decomp.hpp"
#include "tsad/detection.hpp"
#include "tsad/eval.hpp"
#include "tsad/experiment.hpp"
#include "tsad/forecast.hpp"
#include "tsad/graph.hpp"
#include "tsad/lstm.hpp"
#include "tsad/panel.hpp"
#include "tsad/rng.hpp"
#include "tsad/version.hpp"
