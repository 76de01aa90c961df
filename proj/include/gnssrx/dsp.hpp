#pragma once

#include "gnssrx/dsp/fft.hpp"
#include "gnssrx/dsp/kernels.hpp"
#include "gnssrx/dsp/types.hpp"
