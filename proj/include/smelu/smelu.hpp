#pragma once

#include "smelu/activations.hpp"
#include "smelu/data.hpp"
#include "smelu/error.hpp"
#include "smelu/grammar.hpp"
#include "smelu/harness.hpp"
#include "smelu/matrix.hpp"
#include "smelu/metrics.hpp"
#include "smelu/net.hpp"
#include "smelu/optim.hpp"
#include "smelu/piecewise.hpp"
#include "smelu/random.hpp"
#include "smelu/rescu.hpp"
