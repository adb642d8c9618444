#pragma once

// Umbrella header for the fockflow library.

#include "envelope.hpp"
#include "field_spec.hpp"
#include "fit.hpp"
#include "hierarchy.hpp"
#include "integrator.hpp"
#include "models.hpp"
#include "nphoton.hpp"
#include "observables.hpp"
#include "operator.hpp"
#include "oracles.hpp"
#include "quadrature.hpp"
#include "scenario.hpp"
#include "two_time.hpp"
