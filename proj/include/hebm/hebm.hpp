#pragma once

#include "hebm/cli.hpp"
#include "hebm/config.hpp"
#include "hebm/datasets.hpp"
#include "hebm/errors.hpp"
#include "hebm/hybrid_model.hpp"
#include "hebm/metrics.hpp"
#include "hebm/neighbors.hpp"
#include "hebm/oracle.hpp"
#include "hebm/rng.hpp"
#include "hebm/sampling.hpp"
#include "hebm/statistics.hpp"
#include "hebm/training.hpp"
#include "hebm/verify.hpp"
