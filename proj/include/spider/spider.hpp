#pragma once

// Umbrella header: the whole spider-walk library in one include.

#include "spider/core.hpp"
#include "spider/exact.hpp"
#include "spider/experiment.hpp"
#include "spider/first_passage.hpp"
#include "spider/heights.hpp"
#include "spider/legs_growth.hpp"
#include "spider/rng.hpp"
#include "spider/simulate.hpp"
#include "spider/stats.hpp"
