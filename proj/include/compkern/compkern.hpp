#pragma once

// Umbrella header.
#include "branching.hpp"
#include "errors.hpp"
#include "features.hpp"
#include "hermite.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "memorization.hpp"
#include "parallel.hpp"
#include "pgf.hpp"
#include "rng.hpp"
#include "spectral.hpp"
#include "summary.hpp"
#include "sphere.hpp"
#include "version.hpp"
