#pragma once

#include "seed/attention.hpp"
#include "seed/checkpoint.hpp"
#include "seed/config.hpp"
#include "seed/data.hpp"
#include "seed/embedding.hpp"
#include "seed/errors.hpp"
#include "seed/fft.hpp"
#include "seed/fuser.hpp"
#include "seed/grad_check.hpp"
#include "seed/model.hpp"
#include "seed/rng.hpp"
#include "seed/spatial.hpp"
#include "seed/spectral.hpp"
#include "seed/stats.hpp"
#include "seed/tensor.hpp"
#include "seed/training.hpp"
