#pragma once

#include "gridtopo/certificates.hpp"
#include "gridtopo/errors.hpp"
#include "gridtopo/estimation.hpp"
#include "gridtopo/experiment.hpp"
#include "gridtopo/grid.hpp"
#include "gridtopo/io.hpp"
#include "gridtopo/powerflow.hpp"
#include "gridtopo/sampling.hpp"
#include "gridtopo/topology.hpp"
