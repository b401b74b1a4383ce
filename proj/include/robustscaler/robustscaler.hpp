#pragma once

#include "robustscaler/arrival_engine.hpp"
#include "robustscaler/errors.hpp"
#include "robustscaler/harness.hpp"
#include "robustscaler/intensity.hpp"
#include "robustscaler/nhpp.hpp"
#include "robustscaler/periodicity.hpp"
#include "robustscaler/planner.hpp"
#include "robustscaler/rng.hpp"
#include "robustscaler/sim.hpp"
#include "robustscaler/trace_model.hpp"
