#pragma once

#include "cbfqp/closed_form_qp.hpp"
#include "cbfqp/equilibria.hpp"
#include "cbfqp/errors.hpp"
#include "cbfqp/model.hpp"
#include "cbfqp/modified_filter.hpp"
#include "cbfqp/numerics.hpp"
#include "cbfqp/qp_oracle.hpp"
#include "cbfqp/report.hpp"
#include "cbfqp/scenarios.hpp"
#include "cbfqp/simulator.hpp"
