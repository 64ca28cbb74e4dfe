#pragma once

#include "prunevid/clustering.hpp"
#include "prunevid/core.hpp"
#include "prunevid/metrics.hpp"
#include "prunevid/pipeline.hpp"
#include "prunevid/rng.hpp"
#include "prunevid/select.hpp"
#include "prunevid/stmerge.hpp"
#include "prunevid/synth.hpp"
#include "prunevid/tinyllm.hpp"
#include "prunevid/token_io.hpp"
#include "prunevid/visualize.hpp"
