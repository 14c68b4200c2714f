#pragma once

#include <cstdint>
#include <string>

#include "fmprog/harness.hpp"

namespace fmp {

/// Guarded binary VQA: two cheap detector calls gate one expensive answer call.
/// Positives occur at 1%; feature dims 0 and 1 track the two detection truths.
extern const char* const kCanonicalProgram;

EnvironmentSpec canonical_environment(std::uint64_t seed = 0, double lambda = 0.3);

/// Three sites (count, exists, vqa), two backends each, eight static configs.
extern const char* const kThreeSiteProgram;

EnvironmentSpec three_site_environment(std::uint64_t seed = 0, double lambda = 0.5);

/// Same program as the three-site environment with four backends per site.
EnvironmentSpec four_arm_environment(std::uint64_t seed = 0, double lambda = 0.5);

}  // namespace fmp
