#pragma once

#include "hnav/error.hpp"
#include "hnav/trajectory.hpp"
#include "hnav/random.hpp"
#include "hnav/global_planner.hpp"
#include "hnav/local_models.hpp"
#include "hnav/potentials.hpp"
#include "hnav/inference.hpp"
#include "hnav/scenario.hpp"
#include "hnav/simulator.hpp"
#include "hnav/gateway.hpp"
#include "hnav/suite.hpp"
