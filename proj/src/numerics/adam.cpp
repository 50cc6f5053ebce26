// Copyright 2026 The modbridge authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <stdexcept>

#include "mb/ops.hpp"

namespace mb {

double lr_at(int64_t step, double base_lr, int64_t warmup_steps, int64_t total_steps) {
  if (warmup_steps >= total_steps) {
    throw std::invalid_argument("lr_at: warmup_steps must be < total_steps");
  }
  if (step < 0 || step > total_steps) {
    throw std::invalid_argument("lr_at: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_steps) + "]");
  }
  if (step <= warmup_steps) {
    if (warmup_steps == 0) return base_lr;
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  return base_lr * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup_steps);
}

void zero_grad(const ParamRefs& params) {
  for (Parameter* p : params) {
    std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0f);
  }
}

void adam_step(const ParamRefs& params, double lr, double beta1, double beta2, double eps) {
  for (Parameter* p : params) {
    if (!p->grad.all_finite()) {
      throw std::runtime_error("adam_step: non-finite gradient in parameter " + p->name);
    }
  }
  for (Parameter* p : params) {
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      const double g = p->grad.data[i];
      const double m = beta1 * p->adam_m.data[i] + (1.0 - beta1) * g;
      const double v = beta2 * p->adam_v.data[i] + (1.0 - beta2) * g * g;
      p->adam_m.data[i] = static_cast<float>(m);
      p->adam_v.data[i] = static_cast<float>(v);
      const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
      p->value.data[i] = static_cast<float>(static_cast<double>(p->value.data[i]) - update);
    }
  }
}

}  // namespace mb
