#pragma once

#include "memedit/dataset.hpp"
#include "memedit/edit_ops.hpp"
#include "memedit/error.hpp"
#include "memedit/hyperplane_fit.hpp"
#include "memedit/matrix.hpp"
#include "memedit/metrics.hpp"
#include "memedit/rng.hpp"
#include "memedit/synthetic_oracle.hpp"
#include "memedit/tensor_io.hpp"
