#pragma once

#include "mdp.hpp"
#include "operators.hpp"
#include "oracle.hpp"
#include "envs.hpp"
#include "agent.hpp"
#include "optimism.hpp"
#include "harness.hpp"
#include "verify.hpp"
#include "io.hpp"
