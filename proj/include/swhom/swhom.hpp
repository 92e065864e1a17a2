#pragma once

#include "error.hpp"
#include "field.hpp"
#include "grid.hpp"
#include "homogenize.hpp"
#include "linear_solver.hpp"
#include "model.hpp"
#include "operators.hpp"
#include "presets.hpp"
#include "simulate.hpp"
#include "validate.hpp"
#include "verify.hpp"
