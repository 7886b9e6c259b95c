#pragma once

#include "csapo/errors.hpp"
#include "csapo/rng.hpp"
#include "csapo/layered.hpp"
#include "csapo/occupancy.hpp"
#include "csapo/game.hpp"
#include "csapo/confidence.hpp"
#include "csapo/optimizer.hpp"
#include "csapo/lagrangian.hpp"
#include "csapo/hindsight.hpp"
#include "csapo/metrics.hpp"
#include "csapo/harness.hpp"
