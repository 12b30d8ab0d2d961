// Umbrella header.
#ifndef MBPU_MBPU_HPP
#define MBPU_MBPU_HPP

#include "mbpu/adam.hpp"
#include "mbpu/checks.hpp"
#include "mbpu/cloud_io.hpp"
#include "mbpu/config.hpp"
#include "mbpu/extractor.hpp"
#include "mbpu/geometry.hpp"
#include "mbpu/grad_check.hpp"
#include "mbpu/mamba.hpp"
#include "mbpu/metrics.hpp"
#include "mbpu/ops.hpp"
#include "mbpu/params.hpp"
#include "mbpu/regressor.hpp"
#include "mbpu/renderer.hpp"
#include "mbpu/shapes.hpp"
#include "mbpu/tape.hpp"
#include "mbpu/tensor.hpp"
#include "mbpu/training.hpp"
#include "mbpu/upsampler.hpp"

#endif  // MBPU_MBPU_HPP
