#pragma once

#include "lilmap/adaptive.hpp"
#include "lilmap/common.hpp"
#include "lilmap/config.hpp"
#include "lilmap/datagen.hpp"
#include "lilmap/fusion.hpp"
#include "lilmap/geometry.hpp"
#include "lilmap/io.hpp"
#include "lilmap/metrics.hpp"
#include "lilmap/neural.hpp"
#include "lilmap/pipeline.hpp"
#include "lilmap/rng.hpp"
