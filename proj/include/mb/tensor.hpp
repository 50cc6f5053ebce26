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

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mb/shape.hpp"

namespace mb {

// Dense row-major tensor. The element type is float for everything the
// artifact stores or trains; the double instantiation backs the
// finite-difference oracle path.
template <class T>
struct Tens {
  Shape shape;
  std::vector<T> data;

  Tens() = default;
  explicit Tens(Shape s) : shape(s), data(static_cast<size_t>(s.numel()), T(0)) {}
  Tens(Shape s, std::vector<T> d) : shape(s), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != shape.numel()) {
      throw std::invalid_argument("Tens: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape.str());
    }
  }

  int64_t numel() const { return shape.numel(); }

  T& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  T at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  T& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape.cols() + c)]; }
  T at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape.cols() + c)]; }

  T* row_ptr(int64_t r) { return data.data() + r * shape.cols(); }
  const T* row_ptr(int64_t r) const { return data.data() + r * shape.cols(); }

  // Scalar (rank-0) access.
  T scalar() const {
    if (shape.rank() != 0) {
      throw std::logic_error("Tens::scalar on tensor of shape " + shape.str());
    }
    return data[0];
  }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

using Tensor = Tens<float>;

// Unit-norm vector in the joint audio-text space; rank-1 Tensor by
// convention. Downstream noise injection may deliberately break the norm.
using Embedding = Tensor;

Tensor tensor_scalar(float v);
Tensor tensor_from(Shape s, std::initializer_list<float> vals);
Tens<double> widen(const Tensor& t);
Tensor narrow(const Tens<double>& t);

void check_finite(const Tensor& t, const std::string& what);

}  // namespace mb
