#pragma once

#include "g3m/types.hpp"
#include "g3m/rng.hpp"
#include "g3m/kron.hpp"
#include "g3m/estep.hpp"
#include "g3m/mstep.hpp"
#include "g3m/em.hpp"
#include "g3m/baselines.hpp"
#include "g3m/simulate.hpp"
#include "g3m/evaluate.hpp"
#include "g3m/io.hpp"
