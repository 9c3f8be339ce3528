#pragma once

// Umbrella header: the whole library.

#include "jsde/cli.hpp"
#include "jsde/coefficients.hpp"
#include "jsde/conditions.hpp"
#include "jsde/core.hpp"
#include "jsde/estimate.hpp"
#include "jsde/io.hpp"
#include "jsde/jumps.hpp"
#include "jsde/models.hpp"
#include "jsde/mollify.hpp"
#include "jsde/rng.hpp"
#include "jsde/simulate.hpp"
