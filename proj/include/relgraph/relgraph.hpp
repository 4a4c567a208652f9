#pragma once

#include "relgraph/autodiff.hpp"
#include "relgraph/checkpoint.hpp"
#include "relgraph/dataset_io.hpp"
#include "relgraph/depgraph.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/evaluation.hpp"
#include "relgraph/geometry.hpp"
#include "relgraph/losses.hpp"
#include "relgraph/model.hpp"
#include "relgraph/planner.hpp"
#include "relgraph/queries.hpp"
#include "relgraph/rng.hpp"
#include "relgraph/train.hpp"
