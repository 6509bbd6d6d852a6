#pragma once

#include "nbmf/classify.hpp"
#include "nbmf/dataset_io.hpp"
#include "nbmf/errors.hpp"
#include "nbmf/matrix.hpp"
#include "nbmf/model.hpp"
#include "nbmf/nbmf.hpp"
#include "nbmf/nmf.hpp"
#include "nbmf/qubo.hpp"
#include "nbmf/solver.hpp"
