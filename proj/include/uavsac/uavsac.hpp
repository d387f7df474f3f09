#pragma once

#include "uavsac/errors.hpp"
#include "uavsac/rng.hpp"
#include "uavsac/physics.hpp"
#include "uavsac/environment.hpp"
#include "uavsac/replay.hpp"
#include "uavsac/matrix.hpp"
#include "uavsac/params.hpp"
#include "uavsac/autodiff.hpp"
#include "uavsac/networks.hpp"
#include "uavsac/checkpoint.hpp"
#include "uavsac/agent.hpp"
#include "uavsac/config.hpp"
#include "uavsac/baselines.hpp"
#include "uavsac/runner.hpp"
