#include "crmman/optimizer.hpp"

#include <cmath>

#include "crmman/errors.hpp"

namespace crmman {

AdamState AdamState::for_params(const ad::ParameterStore& params) {
  AdamState s;
  for (ad::ParamId id = 0; id < params.size(); ++id) {
    s.first_moment.emplace_back(params.value(id).shape());
    s.second_moment.emplace_back(params.value(id).shape());
  }
  return s;
}

void adam_step(ad::ParameterStore& params, const ad::Gradients& grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw Error("adam_step: parameter, gradient and state counts differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (ad::ParamId id = 0; id < params.size(); ++id) {
    if (!params.trainable(id)) continue;
    ad::Tensor& p = params.value(id);
    const ad::Tensor& g = grads[id];
    ad::Tensor& m = state.first_moment[id];
    ad::Tensor& v = state.second_moment[id];
    if (g.shape() != p.shape() || m.shape() != p.shape() || v.shape() != p.shape()) {
      throw Error("adam_step: shape mismatch for parameter " + params.name(id));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

}  // namespace crmman
