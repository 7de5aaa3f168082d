#pragma once

#include <cstdint>
#include <vector>

#include "crmman/autodiff.hpp"

namespace crmman {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment estimates, one tensor each per parameter.
struct AdamState {
  std::vector<ad::Tensor> first_moment;
  std::vector<ad::Tensor> second_moment;
  std::uint64_t step = 0;

  static AdamState for_params(const ad::ParameterStore& params);
};

/// One bias-corrected Adam update of every trainable parameter. Frozen
/// parameters are left untouched and their moments are not advanced.
void adam_step(ad::ParameterStore& params, const ad::Gradients& grads, AdamState& state,
               const AdamConfig& config);

}  // namespace crmman
