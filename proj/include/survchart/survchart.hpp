#pragma once

#include "survchart/assist.hpp"
#include "survchart/bernoulli.hpp"
#include "survchart/bkcusum.hpp"
#include "survchart/cgrcusum.hpp"
#include "survchart/chartcore.hpp"
#include "survchart/controllimit.hpp"
#include "survchart/csv.hpp"
#include "survchart/datagen.hpp"
#include "survchart/dataset.hpp"
#include "survchart/funnel.hpp"
#include "survchart/parallel.hpp"
#include "survchart/riskadjust.hpp"
#include "survchart/rng.hpp"
#include "survchart/stats.hpp"
#include "survchart/svg.hpp"
