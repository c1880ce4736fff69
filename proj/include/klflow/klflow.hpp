#pragma once

#include <klflow/objective.hpp>
#include <klflow/catalog.hpp>
#include <klflow/flow_types.hpp>
#include <klflow/monitors.hpp>
#include <klflow/dynamics.hpp>
#include <klflow/analysis.hpp>
#include <klflow/io.hpp>
#include <klflow/runner.hpp>
