#pragma once

#include <cmath>

#include "frrn/params.hpp"

namespace frrn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected ADAM update of a single trainable parameter.
template <typename T>
void adam_step(Parameter<T>& p, const AdamConfig& cfg) {
  if (!p.trainable) return;
  auto& st = p.adam;
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const T g = p.grad[i];
    st.m[i] = b1 * st.m[i] + (T(1) - b1) * g;
    st.v[i] = b2 * st.v[i] + (T(1) - b2) * g * g;
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    p.value[i] -= static_cast<T>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

template <typename T>
void adam_step(ParamStore<T>& params, const AdamConfig& cfg) {
  for (std::size_t i = 0; i < params.size(); ++i) adam_step(params[i], cfg);
}

}  // namespace frrn
