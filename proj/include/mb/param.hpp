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

#include <string>
#include <vector>

#include "mb/tensor.hpp"

namespace mb {

// A trainable tensor plus its optimizer slots. Names are stable dotted paths
// ("decoder.block0.attn.wq") and double as checkpoint keys.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  int64_t step_count = 0;

  Parameter() : value(Shape{}), grad(Shape{}), adam_m(Shape{}), adam_v(Shape{}) {}
  Parameter(std::string n, Tensor v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.shape),
        adam_m(value.shape),
        adam_v(value.shape) {}
};

// Containers of non-owning parameter pointers; ordering fixes the
// checkpoint layout and the optimizer update order.
using ParamRefs = std::vector<Parameter*>;

}  // namespace mb
