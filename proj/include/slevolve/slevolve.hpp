#pragma once

#include "slevolve/affine.hpp"
#include "slevolve/centred.hpp"
#include "slevolve/elliptic.hpp"
#include "slevolve/error.hpp"
#include "slevolve/evodata.hpp"
#include "slevolve/evolver.hpp"
#include "slevolve/io.hpp"
#include "slevolve/meshverify.hpp"
#include "slevolve/multilinear.hpp"
#include "slevolve/ode.hpp"
#include "slevolve/parallel.hpp"
#include "slevolve/quadrature.hpp"
#include "slevolve/rational.hpp"
#include "slevolve/threefold.hpp"
