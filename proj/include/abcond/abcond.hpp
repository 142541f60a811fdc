// Umbrella header.
#pragma once

#include "abcond/core.hpp"
#include "abcond/problems.hpp"
#include "abcond/optimizers.hpp"
#include "abcond/diagnostics.hpp"
#include "abcond/theory.hpp"
#include "abcond/io.hpp"
#include "abcond/heatmap.hpp"
#include "abcond/config.hpp"
#include "abcond/commands.hpp"
