#pragma once

// Forecast linear augmented projection: augment a multivariate series with
// linear components, forecast the augmented vector, and project the
// forecasts onto the subspace where the component constraints hold.

#include "flap/covariance.hpp"
#include "flap/errors.hpp"
#include "flap/evaluation.hpp"
#include "flap/forecasting.hpp"
#include "flap/io.hpp"
#include "flap/panel.hpp"
#include "flap/parallel.hpp"
#include "flap/projection.hpp"
#include "flap/rng.hpp"
#include "flap/simulation.hpp"
#include "flap/weights.hpp"
