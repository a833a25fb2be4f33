#pragma once

#include "asdkit/align.hpp"
#include "asdkit/datamodel.hpp"
#include "asdkit/error.hpp"
#include "asdkit/fusion.hpp"
#include "asdkit/fva.hpp"
#include "asdkit/manifest.hpp"
#include "asdkit/metrics.hpp"
#include "asdkit/parallel.hpp"
#include "asdkit/report.hpp"
#include "asdkit/rng.hpp"
#include "asdkit/simgen.hpp"
#include "asdkit/strata.hpp"
