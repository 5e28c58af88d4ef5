#ifndef REVRANK_REVRANK_HPP_
#define REVRANK_REVRANK_HPP_

#include "revrank/calibration.hpp"
#include "revrank/dataset.hpp"
#include "revrank/dataset_io.hpp"
#include "revrank/errors.hpp"
#include "revrank/explicit_ranker.hpp"
#include "revrank/fit_trace.hpp"
#include "revrank/metrics.hpp"
#include "revrank/mlp_ranker.hpp"
#include "revrank/parallel.hpp"
#include "revrank/rng.hpp"
#include "revrank/simulator.hpp"

#endif  // REVRANK_REVRANK_HPP_
