#pragma once

#include "tsprop/bandit_sim.hpp"
#include "tsprop/beliefs.hpp"
#include "tsprop/error.hpp"
#include "tsprop/experiment.hpp"
#include "tsprop/mvncdf.hpp"
#include "tsprop/ope.hpp"
#include "tsprop/oracle.hpp"
#include "tsprop/propensity.hpp"
#include "tsprop/random.hpp"
#include "tsprop/specfun.hpp"
