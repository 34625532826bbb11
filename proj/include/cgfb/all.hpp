#pragma once

#include "cgfb/cgfb.hpp"
#include "cgfb/errors.hpp"
#include "cgfb/experiment.hpp"
#include "cgfb/gauss.hpp"
#include "cgfb/io.hpp"
#include "cgfb/kalman.hpp"
#include "cgfb/model.hpp"
#include "cgfb/sliding_window.hpp"
