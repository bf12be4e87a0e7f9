#pragma once

#include "rdmkit/compare.hpp"
#include "rdmkit/covariance.hpp"
#include "rdmkit/dataset.hpp"
#include "rdmkit/estimators.hpp"
#include "rdmkit/io.hpp"
#include "rdmkit/noise.hpp"
#include "rdmkit/rng.hpp"
#include "rdmkit/scenarios.hpp"
#include "rdmkit/simulate.hpp"
