#pragma once

// Selection-conditional conformal prediction: finite-sample valid prediction
// sets for test units chosen by a data-dependent selection rule, built from
// reference sets of calibration points that stay exchangeable with the unit
// conditional on the selection event.

#include "jomi/dgp.hpp"
#include "jomi/engine.hpp"
#include "jomi/harness.hpp"
#include "jomi/intervals.hpp"
#include "jomi/io.hpp"
#include "jomi/predsel.hpp"
#include "jomi/pvalues.hpp"
#include "jomi/quantile.hpp"
#include "jomi/rng.hpp"
#include "jomi/rules.hpp"
#include "jomi/scores.hpp"
#include "jomi/selection.hpp"
#include "jomi/taxonomy.hpp"
#include "jomi/unit.hpp"
#include "jomi/view.hpp"
