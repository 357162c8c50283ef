#pragma once

#include "levymele/asymptotics.hpp"
#include "levymele/el_engine.hpp"
#include "levymele/error.hpp"
#include "levymele/estimator.hpp"
#include "levymele/io.hpp"
#include "levymele/levy_models.hpp"
#include "levymele/nelder_mead.hpp"
#include "levymele/numerics.hpp"
#include "levymele/option_pricing.hpp"
#include "levymele/params.hpp"
#include "levymele/path_simulator.hpp"
#include "levymele/replication.hpp"
#include "levymele/rng.hpp"
