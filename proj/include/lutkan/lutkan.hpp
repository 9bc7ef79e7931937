#pragma once

#include "lutkan/bench.hpp"
#include "lutkan/compiler.hpp"
#include "lutkan/data.hpp"
#include "lutkan/error.hpp"
#include "lutkan/matrix.hpp"
#include "lutkan/metrics.hpp"
#include "lutkan/model.hpp"
#include "lutkan/model_io.hpp"
#include "lutkan/parallel.hpp"
#include "lutkan/rng.hpp"
#include "lutkan/runtime.hpp"
