#pragma once

#include <ceqn/core.hpp>
#include <ceqn/problem.hpp>
#include <ceqn/hessian_approx.hpp>
#include <ceqn/steps.hpp>
#include <ceqn/driver.hpp>
#include <ceqn/data_io.hpp>
#include <ceqn/config.hpp>
#include <ceqn/bench.hpp>
