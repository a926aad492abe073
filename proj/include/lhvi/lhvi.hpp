#pragma once

#include "lhvi/c2f.hpp"
#include "lhvi/error.hpp"
#include "lhvi/fit.hpp"
#include "lhvi/graph.hpp"
#include "lhvi/inference.hpp"
#include "lhvi/json_io.hpp"
#include "lhvi/lifting.hpp"
#include "lhvi/mixture.hpp"
#include "lhvi/models.hpp"
#include "lhvi/optimizer.hpp"
#include "lhvi/oracles.hpp"
#include "lhvi/potentials.hpp"
#include "lhvi/quadrature.hpp"
#include "lhvi/variational.hpp"
