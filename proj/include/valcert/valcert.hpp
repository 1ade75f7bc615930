#pragma once

#include "valcert/benchmarks.hpp"
#include "valcert/cache_io.hpp"
#include "valcert/estimator.hpp"
#include "valcert/experiment.hpp"
#include "valcert/loss.hpp"
#include "valcert/mdp.hpp"
#include "valcert/registry.hpp"
#include "valcert/rng.hpp"
#include "valcert/rollout.hpp"
#include "valcert/stopping.hpp"
#include "valcert/tabular.hpp"
