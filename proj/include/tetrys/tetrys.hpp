#pragma once

#include "tetrys/alloc.hpp"
#include "tetrys/channel.hpp"
#include "tetrys/codec.hpp"
#include "tetrys/compare.hpp"
#include "tetrys/fecblock.hpp"
#include "tetrys/gf.hpp"
#include "tetrys/markov.hpp"
#include "tetrys/sim.hpp"
#include "tetrys/splitmix.hpp"
#include "tetrys/stats.hpp"
#include "tetrys/wire.hpp"
