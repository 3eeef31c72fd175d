#pragma once

#include "tensorkernel/data.hpp"
#include "tensorkernel/error.hpp"
#include "tensorkernel/kernels.hpp"
#include "tensorkernel/matrix.hpp"
#include "tensorkernel/metrics.hpp"
#include "tensorkernel/model.hpp"
#include "tensorkernel/parallel.hpp"
#include "tensorkernel/random.hpp"
#include "tensorkernel/solver.hpp"
#include "tensorkernel/symtensor.hpp"
