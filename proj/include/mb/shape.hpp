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

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>

namespace mb {

// Shape of a dense row-major tensor, rank 0 (scalar) through 3.
class Shape {
 public:
  static constexpr int kMaxRank = 3;

  Shape() = default;
  Shape(std::initializer_list<int64_t> dims) {
    if (dims.size() > kMaxRank) {
      throw std::invalid_argument("Shape: rank > 3");
    }
    for (int64_t d : dims) {
      if (d <= 0) {
        throw std::invalid_argument("Shape: extents must be positive");
      }
      dims_[rank_++] = d;
    }
  }

  int rank() const { return rank_; }

  int64_t dim(int i) const {
    if (i < 0 || i >= rank_) {
      throw std::out_of_range("Shape: dim index " + std::to_string(i) +
                              " out of range for rank " + std::to_string(rank_));
    }
    return dims_[i];
  }

  // Row/column accessors for the common rank-2 case.
  int64_t rows() const { return dim(0); }
  int64_t cols() const { return dim(1); }

  int64_t numel() const {
    int64_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i) {
      if (dims_[i] != o.dims_[i]) return false;
    }
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < rank_; ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

 private:
  std::array<int64_t, kMaxRank> dims_{};
  int rank_ = 0;
};

}  // namespace mb
