#ifndef PPMATTE_PPMATTE_HPP_
#define PPMATTE_PPMATTE_HPP_

#include "ppmatte/autograd.hpp"
#include "ppmatte/core.hpp"
#include "ppmatte/datasynth.hpp"
#include "ppmatte/harness.hpp"
#include "ppmatte/imgproc.hpp"
#include "ppmatte/io.hpp"
#include "ppmatte/losses.hpp"
#include "ppmatte/metrics.hpp"
#include "ppmatte/model.hpp"
#include "ppmatte/nn.hpp"
#include "ppmatte/random.hpp"
#include "ppmatte/tensor.hpp"

#endif  // PPMATTE_PPMATTE_HPP_
