#pragma once

#include "impact_qp/spatial.hpp"
#include "impact_qp/model.hpp"
#include "impact_qp/model_io.hpp"
#include "impact_qp/impact.hpp"
#include "impact_qp/constraints.hpp"
#include "impact_qp/qp.hpp"
#include "impact_qp/controller.hpp"
#include "impact_qp/toy.hpp"
#include "impact_qp/sim.hpp"
#include "impact_qp/scenario.hpp"
