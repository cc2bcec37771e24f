#pragma once

#include "mrmbench/error.hpp"
#include "mrmbench/rng.hpp"
#include "mrmbench/repr_store.hpp"
#include "mrmbench/dataset_builder.hpp"
#include "mrmbench/probe.hpp"
#include "mrmbench/itp.hpp"
#include "mrmbench/stats.hpp"
#include "mrmbench/workers.hpp"

namespace mrmbench {

inline constexpr const char* kToolkitVersion = "1.0.0";

}  // namespace mrmbench
