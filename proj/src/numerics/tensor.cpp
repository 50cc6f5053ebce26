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

#include "mb/tensor.hpp"

#include <stdexcept>

namespace mb {

Tensor tensor_scalar(float v) {
  Tensor t{Shape{}};
  t.data[0] = v;
  return t;
}

Tensor tensor_from(Shape s, std::initializer_list<float> vals) {
  return Tensor(s, std::vector<float>(vals));
}

Tens<double> widen(const Tensor& t) {
  Tens<double> out(t.shape);
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = t.data[i];
  return out;
}

Tensor narrow(const Tens<double>& t) {
  Tensor out(t.shape);
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<float>(t.data[i]);
  return out;
}

void check_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) {
    throw std::runtime_error("non-finite values in " + what);
  }
}

}  // namespace mb
