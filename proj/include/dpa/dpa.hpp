#pragma once

#include "dpa/aggregation.hpp"
#include "dpa/dense_map.hpp"
#include "dpa/error.hpp"
#include "dpa/geometry.hpp"
#include "dpa/gradcheck.hpp"
#include "dpa/hough.hpp"
#include "dpa/io.hpp"
#include "dpa/jacobi.hpp"
#include "dpa/losses.hpp"
#include "dpa/metrics.hpp"
#include "dpa/pipeline.hpp"
#include "dpa/point_model.hpp"
#include "dpa/pose.hpp"
#include "dpa/rng.hpp"
#include "dpa/synth.hpp"
