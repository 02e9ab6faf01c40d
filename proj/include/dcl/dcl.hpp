#pragma once

// Umbrella header for the estimation library (everything except the CLI layer,
// which additionally needs yaml-cpp).

#include "dcl/geom.hpp"
#include "dcl/models.hpp"
#include "dcl/xform.hpp"
#include "dcl/filters/types.hpp"
#include "dcl/filters/joint_ekf.hpp"
#include "dcl/filters/server.hpp"
#include "dcl/filters/tsb.hpp"
#include "dcl/filters/osb.hpp"
#include "dcl/filters/naive.hpp"
#include "dcl/filters/team.hpp"
#include "dcl/obscheck.hpp"
#include "dcl/sim/rng.hpp"
#include "dcl/sim/scenario.hpp"
#include "dcl/sim/episode.hpp"
#include "dcl/sim/metrics.hpp"
#include "dcl/sim/io.hpp"
#include "dcl/mrclam/dataset.hpp"
#include "dcl/mrclam/events.hpp"
#include "dcl/mrclam/runner.hpp"
