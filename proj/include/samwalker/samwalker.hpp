#pragma once

// Umbrella header for the samwalker library.

#include "samwalker/alias.hpp"
#include "samwalker/corpus.hpp"
#include "samwalker/error.hpp"
#include "samwalker/exposure.hpp"
#include "samwalker/factors.hpp"
#include "samwalker/graphnet.hpp"
#include "samwalker/metrics.hpp"
#include "samwalker/rng.hpp"
#include "samwalker/synthetic.hpp"
#include "samwalker/trainer.hpp"
#include "samwalker/walker.hpp"
