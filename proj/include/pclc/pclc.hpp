#pragma once

#include "pclc/core.hpp"
#include "pclc/rng.hpp"
#include "pclc/plant.hpp"
#include "pclc/features.hpp"
#include "pclc/control.hpp"
#include "pclc/safety.hpp"
#include "pclc/scenario.hpp"
#include "pclc/metrics.hpp"
#include "pclc/engine.hpp"
#include "pclc/report.hpp"
