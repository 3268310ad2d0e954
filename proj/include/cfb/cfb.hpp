#pragma once

#include "cfb/backend.hpp"
#include "cfb/bigram_backend.hpp"
#include "cfb/boosting.hpp"
#include "cfb/core.hpp"
#include "cfb/cost_model.hpp"
#include "cfb/decode.hpp"
#include "cfb/errors.hpp"
#include "cfb/eval.hpp"
#include "cfb/json_io.hpp"
#include "cfb/rng.hpp"
#include "cfb/sampling.hpp"
#include "cfb/scripted_backend.hpp"
#include "cfb/support.hpp"
