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

#include "mb/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>

namespace mb {
namespace {

constexpr char kMagic[4] = {'M', 'B', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float f) {
  put_u32(out, std::bit_cast<uint32_t>(f));
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  const std::string& path;

  uint32_t u32() {
    if (pos + 4 > buf.size()) {
      throw std::runtime_error("checkpoint truncated: " + path);
    }
    uint32_t v = 0;
    v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + 0]));
    v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + 1])) << 8;
    v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + 2])) << 16;
    v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + 3])) << 24;
    pos += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string bytes(size_t n) {
    if (pos + n > buf.size()) {
      throw std::runtime_error("checkpoint truncated: " + path);
    }
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const NamedTensor& nt : tensors) {
    put_u32(out, static_cast<uint32_t>(nt.name.size()));
    out.append(nt.name);
    put_u32(out, static_cast<uint32_t>(nt.tensor.shape.rank()));
    for (int i = 0; i < nt.tensor.shape.rank(); ++i) {
      put_u32(out, static_cast<uint32_t>(nt.tensor.shape.dim(i)));
    }
    for (float f : nt.tensor.data) put_f32(out, f);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r{buf, 0, path};
  if (r.bytes(4) != std::string(kMagic, 4)) {
    throw std::runtime_error("bad checkpoint magic: " + path);
  }
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             ": " + path);
  }
  const uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.bytes(r.u32());
    const uint32_t rank = r.u32();
    if (rank > 3) {
      throw std::runtime_error("checkpoint tensor '" + nt.name + "' has rank " +
                               std::to_string(rank) + ": " + path);
    }
    Shape shape;
    {
      int64_t d[3];
      for (uint32_t k = 0; k < rank; ++k) d[k] = static_cast<int64_t>(r.u32());
      switch (rank) {
        case 0: shape = Shape{}; break;
        case 1: shape = Shape{d[0]}; break;
        case 2: shape = Shape{d[0], d[1]}; break;
        default: shape = Shape{d[0], d[1], d[2]}; break;
      }
    }
    Tensor t(shape);
    for (auto& v : t.data) v = r.f32();
    nt.tensor = std::move(t);
    out.push_back(std::move(nt));
  }
  if (r.pos != buf.size()) {
    throw std::runtime_error("trailing bytes after checkpoint payload: " + path);
  }
  return out;
}

void save_params(const std::string& path, const ParamRefs& params) {
  std::vector<NamedTensor> tensors;
  tensors.reserve(params.size());
  for (const Parameter* p : params) tensors.push_back({p->name, p->value});
  save_checkpoint(path, tensors);
}

void load_params(const std::string& path, const ParamRefs& params) {
  std::vector<NamedTensor> tensors = load_checkpoint(path);
  std::map<std::string, Tensor*> by_name;
  for (NamedTensor& nt : tensors) {
    if (!by_name.emplace(nt.name, &nt.tensor).second) {
      throw std::runtime_error("duplicate tensor '" + nt.name + "' in " + path);
    }
  }
  if (by_name.size() != params.size()) {
    throw std::runtime_error("checkpoint " + path + " holds " +
                             std::to_string(by_name.size()) + " tensors, expected " +
                             std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw std::runtime_error("missing tensor '" + p->name + "' in " + path);
    }
    if (!(it->second->shape == p->value.shape)) {
      throw std::runtime_error("shape mismatch for '" + p->name + "' in " + path + ": " +
                               it->second->shape.str() + " vs " + p->value.shape.str());
    }
    p->value = *it->second;
  }
}

}  // namespace mb
