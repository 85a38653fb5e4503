#pragma once

#include "cogdrone/atlas.hpp"
#include "cogdrone/bench.hpp"
#include "cogdrone/camera.hpp"
#include "cogdrone/canonical.hpp"
#include "cogdrone/core.hpp"
#include "cogdrone/dataset.hpp"
#include "cogdrone/harness.hpp"
#include "cogdrone/image.hpp"
#include "cogdrone/oracle_planner.hpp"
#include "cogdrone/protocol.hpp"
#include "cogdrone/rng.hpp"
#include "cogdrone/sim_world.hpp"
#include "cogdrone/task_engine.hpp"
#include "cogdrone/transport.hpp"
