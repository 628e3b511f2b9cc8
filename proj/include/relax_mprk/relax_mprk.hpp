#pragma once

#include "relax_mprk/convergence.hpp"
#include "relax_mprk/dense_linear.hpp"
#include "relax_mprk/errors.hpp"
#include "relax_mprk/means.hpp"
#include "relax_mprk/pdrs.hpp"
#include "relax_mprk/problems.hpp"
#include "relax_mprk/reference.hpp"
#include "relax_mprk/relaxation.hpp"
#include "relax_mprk/schemes.hpp"
#include "relax_mprk/step_control.hpp"
#include "relax_mprk/steppers.hpp"
