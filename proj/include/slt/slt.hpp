#pragma once

#include "slt/analysis.hpp"
#include "slt/construct.hpp"
#include "slt/data.hpp"
#include "slt/error.hpp"
#include "slt/experiment.hpp"
#include "slt/init.hpp"
#include "slt/network.hpp"
#include "slt/pruner.hpp"
#include "slt/rng.hpp"
#include "slt/scaling.hpp"
#include "slt/serialize.hpp"
#include "slt/sgd.hpp"
#include "slt/subset_sum.hpp"
