#pragma once

#include "qsid/errors.hpp"
#include "qsid/random.hpp"
#include "qsid/core_model.hpp"
#include "qsid/simulator.hpp"
#include "qsid/spectrum.hpp"
#include "qsid/optimize.hpp"
#include "qsid/estimator.hpp"
#include "qsid/reconstructor.hpp"
#include "qsid/harness.hpp"
#include "qsid/provenance.hpp"
