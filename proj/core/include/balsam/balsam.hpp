#pragma once

#include "balsam/basic_designs.hpp"
#include "balsam/cps.hpp"
#include "balsam/cube.hpp"
#include "balsam/diagnostics.hpp"
#include "balsam/estimators.hpp"
#include "balsam/frame.hpp"
#include "balsam/oracle.hpp"
#include "balsam/random.hpp"
#include "balsam/spatial.hpp"
