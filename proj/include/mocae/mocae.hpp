#pragma once
// Umbrella header.

#include "mocae/config.hpp"
#include "mocae/evaluation.hpp"
#include "mocae/gradcheck.hpp"
#include "mocae/grid_search.hpp"
#include "mocae/nifti.hpp"
#include "mocae/phantom.hpp"
#include "mocae/retrieval.hpp"
#include "mocae/serialize.hpp"
#include "mocae/train.hpp"
