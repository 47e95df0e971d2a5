#pragma once

#include "manipdet/core.hpp"
#include "manipdet/rng.hpp"
#include "manipdet/vecmath.hpp"
#include "manipdet/ingest.hpp"
#include "manipdet/metrics.hpp"
#include "manipdet/features.hpp"
#include "manipdet/stacker.hpp"
#include "manipdet/calibrate.hpp"
#include "manipdet/spanex.hpp"
#include "manipdet/heads.hpp"
#include "manipdet/gradcheck.hpp"
#include "manipdet/promptgen.hpp"
#include "manipdet/pipeline.hpp"
#include "manipdet/synthetic.hpp"

namespace manipdet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace manipdet
