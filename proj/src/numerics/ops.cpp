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

#include "mb/ops.hpp"

#include <cmath>
#include <stdexcept>

#include "mb/kernels.hpp"

namespace mb {

Tensor softmax(const Tensor& logits, int axis) {
  const int rank = logits.shape.rank();
  if (axis < 0 || axis >= rank) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                " invalid for shape " + logits.shape.str());
  }
  // Walk every 1-d line along the softmax axis; the remaining axes index
  // the line. Strides are row-major.
  int64_t dims[3] = {1, 1, 1};
  for (int i = 0; i < rank; ++i) dims[i] = logits.shape.dim(i);
  int64_t strides[3] = {0, 0, 0};
  int64_t s = 1;
  for (int i = rank - 1; i >= 0; --i) {
    strides[i] = s;
    s *= dims[i];
  }
  const int64_t n = dims[axis];
  const int64_t stride = strides[axis];

  Tensor out(logits.shape);
  std::vector<int64_t> outer_axes;
  for (int i = 0; i < rank; ++i)
    if (i != axis) outer_axes.push_back(i);

  int64_t outer_count = 1;
  for (int64_t a : outer_axes) outer_count *= dims[a];

  for (int64_t o = 0; o < outer_count; ++o) {
    int64_t rem = o;
    int64_t base = 0;
    for (auto it = outer_axes.rbegin(); it != outer_axes.rend(); ++it) {
      base += (rem % dims[*it]) * strides[*it];
      rem /= dims[*it];
    }
    double m = logits.data[static_cast<size_t>(base)];
    for (int64_t i = 1; i < n; ++i)
      m = std::max(m, static_cast<double>(logits.data[static_cast<size_t>(base + i * stride)]));
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i)
      sum += std::exp(static_cast<double>(logits.data[static_cast<size_t>(base + i * stride)]) - m);
    for (int64_t i = 0; i < n; ++i) {
      const size_t idx = static_cast<size_t>(base + i * stride);
      out.data[idx] = static_cast<float>(std::exp(static_cast<double>(logits.data[idx]) - m) / sum);
    }
  }
  return out;
}

double cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<char>& mask) {
  if (logits.shape.rank() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be rank-2, got " +
                                logits.shape.str());
  }
  const int64_t L = logits.shape.rows(), V = logits.shape.cols();
  if (static_cast<int64_t>(targets.size()) != L || static_cast<int64_t>(mask.size()) != L) {
    throw std::invalid_argument("cross_entropy: targets/mask must have one entry per row");
  }
  int64_t count = 0;
  double total = 0.0;
  for (int64_t r = 0; r < L; ++r) {
    if (!mask[static_cast<size_t>(r)]) continue;
    const int tgt = targets[static_cast<size_t>(r)];
    if (tgt < 0 || tgt >= V) {
      throw std::invalid_argument("cross_entropy: target id " + std::to_string(tgt) +
                                  " out of range at row " + std::to_string(r));
    }
    double m = logits.at(r, 0);
    for (int64_t v = 1; v < V; ++v) m = std::max(m, static_cast<double>(logits.at(r, v)));
    double sum = 0.0;
    for (int64_t v = 0; v < V; ++v) sum += std::exp(static_cast<double>(logits.at(r, v)) - m);
    total += m + std::log(sum) - static_cast<double>(logits.at(r, tgt));
    ++count;
  }
  if (count == 0) throw std::runtime_error("cross_entropy: empty loss support");
  return total / static_cast<double>(count);
}

Tensor l2_normalized(const Tensor& v) {
  if (v.shape.rank() != 1) {
    throw std::invalid_argument("l2_normalized: input must be rank-1, got " + v.shape.str());
  }
  const double norm =
      std::sqrt(kern::active().dot(v.data.data(), v.data.data(), v.data.size()));
  if (norm < 1e-12) throw std::runtime_error("l2_normalized: norm underflow");
  Tensor out(v.shape);
  for (size_t i = 0; i < v.data.size(); ++i)
    out.data[i] = static_cast<float>(static_cast<double>(v.data[i]) / norm);
  return out;
}

double linf_distance(const Tensor& a, const Tensor& b) {
  if (!(a.shape == b.shape)) {
    throw std::invalid_argument("linf_distance: shape mismatch " + a.shape.str() +
                                " vs " + b.shape.str());
  }
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  }
  return m;
}

}  // namespace mb
