#pragma once

#include "rigid/conditional.hpp"
#include "rigid/error.hpp"
#include "rigid/missingness.hpp"
#include "rigid/moments.hpp"
#include "rigid/prox.hpp"
#include "rigid/risk.hpp"
#include "rigid/solver.hpp"
#include "rigid/types.hpp"
#include "rigid/pipeline/csv.hpp"
#include "rigid/pipeline/model.hpp"
#include "rigid/pipeline/simulate.hpp"
#include "rigid/pipeline/standardize.hpp"
