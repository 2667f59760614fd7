#pragma once

#include "condex/error.hpp"
#include "condex/rng.hpp"
#include "condex/optim.hpp"
#include "condex/stats.hpp"
#include "condex/series.hpp"
#include "condex/margins.hpp"
#include "condex/dists.hpp"
#include "condex/norming.hpp"
#include "condex/parallel.hpp"
#include "condex/fit.hpp"
#include "condex/simulate.hpp"
#include "condex/resample.hpp"
#include "condex/functionals.hpp"
#include "condex/generators.hpp"
#include "condex/io.hpp"
