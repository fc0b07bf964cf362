#pragma once

// Umbrella header. The networking headers (remote_backend.hpp, server.hpp)
// pull in cpp-httplib and are left out; include them explicitly.

#include "semfield/aggregation.hpp"
#include "semfield/anomaly.hpp"
#include "semfield/backend.hpp"
#include "semfield/bundle.hpp"
#include "semfield/disambiguation.hpp"
#include "semfield/error.hpp"
#include "semfield/evaluation.hpp"
#include "semfield/field.hpp"
#include "semfield/grid.hpp"
#include "semfield/metrics.hpp"
#include "semfield/pipeline.hpp"
#include "semfield/ply.hpp"
#include "semfield/query.hpp"
#include "semfield/synthetic.hpp"
#include "semfield/tensor.hpp"
#include "semfield/wire.hpp"
