#pragma once

#include "core/random.hpp"
#include "core/stats.hpp"
#include "data.hpp"
#include "estimators.hpp"
#include "io.hpp"
#include "learners.hpp"
#include "mgraph.hpp"
#include "oracles.hpp"
#include "simulate.hpp"
