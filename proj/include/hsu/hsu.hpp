#pragma once

#include "hsu/bregman.hpp"
#include "hsu/error.hpp"
#include "hsu/kernel.hpp"
#include "hsu/metrics.hpp"
#include "hsu/pixel.hpp"
#include "hsu/qp.hpp"
#include "hsu/scene.hpp"
#include "hsu/spatial.hpp"
#include "hsu/synth.hpp"

namespace hsu {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hsu
