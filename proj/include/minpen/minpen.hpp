#pragma once

// Everything in one include.

#include "minpen/binom_solver.hpp"
#include "minpen/core.hpp"
#include "minpen/errors.hpp"
#include "minpen/format.hpp"
#include "minpen/gauss_solver.hpp"
#include "minpen/inference.hpp"
#include "minpen/io.hpp"
#include "minpen/parallel.hpp"
#include "minpen/relations.hpp"
#include "minpen/simbench.hpp"
#include "minpen/tuning.hpp"
