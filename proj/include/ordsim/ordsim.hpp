#pragma once

#include "ordsim/csv.hpp"
#include "ordsim/datagen.hpp"
#include "ordsim/estimation.hpp"
#include "ordsim/logistic.hpp"
#include "ordsim/model.hpp"
#include "ordsim/rng.hpp"
#include "ordsim/scenario.hpp"
#include "ordsim/simulation.hpp"
#include "ordsim/wald.hpp"
