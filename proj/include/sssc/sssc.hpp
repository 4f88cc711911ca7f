#pragma once

#include "sssc/common.hpp"
#include "sssc/evaluation.hpp"
#include "sssc/graph.hpp"
#include "sssc/inference.hpp"
#include "sssc/io.hpp"
#include "sssc/sparse_solver.hpp"
#include "sssc/trainer.hpp"
