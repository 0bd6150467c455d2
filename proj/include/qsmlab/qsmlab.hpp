#pragma once

#include "systems.hpp"
#include "discretization.hpp"
#include "qsm.hpp"
#include "controlsets.hpp"
#include "partitions.hpp"
#include "entropy.hpp"
#include "verify.hpp"
#include "config.hpp"
#include "io.hpp"
#include "cli.hpp"
