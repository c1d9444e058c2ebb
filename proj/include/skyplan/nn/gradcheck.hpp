#pragma once

#include "skyplan/nn/model.hpp"

#include <cstdint>
#include <string>

namespace skyplan::nn {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter; // "name[index]"
  std::size_t checked = 0;     // parameter entries compared
  std::size_t refined = 0;     // entries where the step was shrunk to stay off a ReLU kink
};

/// Small architecture used for finite-difference checks: same topology as
/// the production model, narrow widths.
ModelConfig gradcheck_config();

/// Relative error used by every gradient comparison:
/// |a - n| / max(|a|, |n|, floor).
double gradient_rel_error(double analytic, double numeric, double floor = 1e-6);

/// Compares the analytic gradient of a random smooth functional of both heads
/// against central differences for every parameter entry, in double precision.
/// Differences at h and h/2 are combined by Richardson extrapolation.
/// When a step of size h would move a ReLU pre-activation across zero the
/// step is shrunk by 10x (down to h * 1e-4) so the difference quotient stays
/// on one linear piece.
GradcheckResult gradcheck_model(std::uint64_t seed, const ModelConfig& cfg = gradcheck_config(), double h = 1e-3);

} // namespace skyplan::nn
