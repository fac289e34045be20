#pragma once

#include "itepi/bench.hpp"
#include "itepi/conformal.hpp"
#include "itepi/dgp.hpp"
#include "itepi/hardness.hpp"
#include "itepi/interval.hpp"
#include "itepi/learners.hpp"
#include "itepi/methods.hpp"
#include "itepi/normal.hpp"
#include "itepi/parallel.hpp"
#include "itepi/rng.hpp"
#include "itepi/split_pair.hpp"
#include "itepi/stochastic_orders.hpp"
