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

#pragma once

#include <cstdint>
#include <vector>

#include "mb/param.hpp"
#include "mb/tensor.hpp"

namespace mb {

// Max-subtracted softmax along the given axis. Axis must index into the
// shape; rank up to 3.
Tensor softmax(const Tensor& logits, int axis);

// Mean negative log-likelihood over rows where mask is nonzero.
// logits is [L,V]; throws "empty loss support" when the mask selects nothing.
double cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<char>& mask);

// Linear ramp 0 -> base_lr over warmup_steps, then linear decay to 0 at
// total_steps. warmup_steps must be < total_steps.
double lr_at(int64_t step, double base_lr, int64_t warmup_steps, int64_t total_steps);

void zero_grad(const ParamRefs& params);

// In-place Adam with bias correction; element math in double, state stored
// in float. Throws (naming the parameter) on a non-finite gradient.
void adam_step(const ParamRefs& params, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Plain (tape-free) helpers shared by inference paths.
Tensor l2_normalized(const Tensor& v);
double linf_distance(const Tensor& a, const Tensor& b);

}  // namespace mb
