#pragma once

#include "tankdiag/common.hpp"
#include "tankdiag/bondgraph.hpp"
#include "tankdiag/plant.hpp"
#include "tankdiag/detection.hpp"
#include "tankdiag/fdi.hpp"
#include "tankdiag/dx.hpp"
#include "tankdiag/ig.hpp"
#include "tankdiag/workbench.hpp"
