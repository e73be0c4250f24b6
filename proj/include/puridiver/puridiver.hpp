#pragma once

#include "puridiver/config.hpp"
#include "puridiver/dataset_io.hpp"
#include "puridiver/errors.hpp"
#include "puridiver/gmm.hpp"
#include "puridiver/harness.hpp"
#include "puridiver/memory.hpp"
#include "puridiver/metrics.hpp"
#include "puridiver/nnkit.hpp"
#include "puridiver/rng.hpp"
#include "puridiver/robust.hpp"
#include "puridiver/stream.hpp"
