#pragma once

#include "kr/errors.hpp"
#include "kr/path_measure.hpp"
#include "kr/kernel_tree.hpp"
#include "kr/measure_io.hpp"
#include "kr/quantile.hpp"
#include "kr/transport.hpp"
#include "kr/kr_metric.hpp"
#include "kr/bicausal.hpp"
#include "kr/analysis.hpp"
#include "kr/multidim.hpp"
#include "kr/experiments.hpp"
