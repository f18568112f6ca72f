#pragma once

#include "avpred/core/conv.hpp"
#include "avpred/core/error.hpp"
#include "avpred/core/gradcheck.hpp"
#include "avpred/core/ops.hpp"
#include "avpred/core/random.hpp"
#include "avpred/core/sampling.hpp"
#include "avpred/core/tensor.hpp"
