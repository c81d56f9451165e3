#pragma once

#include "corpus.hpp"
#include "ep.hpp"
#include "evaluate.hpp"
#include "experiments.hpp"
#include "learn.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "vb.hpp"
