#pragma once

#include "icdm/channel.hpp"
#include "icdm/core.hpp"
#include "icdm/guidance.hpp"
#include "icdm/oracle.hpp"
#include "icdm/rng.hpp"
#include "icdm/sampler.hpp"
#include "icdm/schedule.hpp"
#include "icdm/score_models.hpp"
