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

#include "mb/param.hpp"
#include "mb/tensor.hpp"

namespace mb {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Binary archive: "MBCK", u32 LE version, u32 LE tensor count, then per
// tensor: u32 LE name length, UTF-8 name, u32 LE rank, u32 LE dims, f32 LE
// row-major data. Writing then reading reproduces the input bit for bit.
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);

// Validates magic, version, and that the payload ends exactly at EOF.
std::vector<NamedTensor> load_checkpoint(const std::string& path);

void save_params(const std::string& path, const ParamRefs& params);

// Strict: every parameter must be present with matching shape, and the
// file must not contain unknown names.
void load_params(const std::string& path, const ParamRefs& params);

}  // namespace mb
