#pragma once

#include <adacusum/adaptive.hpp>
#include <adacusum/core_stats.hpp>
#include <adacusum/error.hpp>
#include <adacusum/philox.hpp>
#include <adacusum/reporting.hpp>
#include <adacusum/simulation.hpp>
#include <adacusum/testing.hpp>
#include <adacusum/weighting.hpp>
