#pragma once

#include "error.hpp"
#include "seeding.hpp"
#include "points.hpp"
#include "kernels.hpp"
#include "privacy.hpp"
#include "classifier.hpp"
#include "rates.hpp"
#include "adaptive.hpp"
#include "dataio.hpp"
#include "simbench.hpp"
#include "config.hpp"
#include "cli.hpp"
