#pragma once

#include "ipmc/core.hpp"
#include "ipmc/kinematics.hpp"
#include "ipmc/sci.hpp"
#include "ipmc/solver.hpp"
#include "ipmc/baselines.hpp"
#include "ipmc/scenario.hpp"
#include "ipmc/lto.hpp"
#include "ipmc/sim.hpp"
#include "ipmc/io.hpp"
#include "ipmc/cli.hpp"
