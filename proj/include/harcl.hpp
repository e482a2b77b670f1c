#pragma once
// Umbrella header. Individual headers are fine too; this pulls everything.
#include "harcl/errors.hpp"
#include "harcl/rng.hpp"
#include "harcl/tensor.hpp"
#include "harcl/cnn.hpp"
#include "harcl/regularizers.hpp"
#include "harcl/objective.hpp"
#include "harcl/metrics.hpp"
#include "harcl/scenario.hpp"
#include "harcl/har_data.hpp"
#include "harcl/synth_har.hpp"
#include "harcl/engine.hpp"
#include "harcl/config.hpp"
#include "harcl/result_io.hpp"
