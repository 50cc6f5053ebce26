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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mb/checkpoint.hpp"
#include "mb/digest.hpp"
#include "mb/jsonl.hpp"
#include "mb/rng.hpp"
#include "mb/tensor.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mb_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

mb::Tensor random_tensor(mb::Shape s, uint64_t seed) {
  mb::RngState rng(seed);
  mb::Tensor t(s);
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact and order preserving") {
  TempDir tmp;
  const std::string path = tmp.file("a.ckpt");
  std::vector<mb::NamedTensor> tensors;
  tensors.push_back({"weights", random_tensor(mb::Shape{3, 5}, 1)});
  tensors.push_back({"bias", random_tensor(mb::Shape{5}, 2)});
  tensors.push_back({"temp", mb::tensor_scalar(19.25f)});
  mb::save_checkpoint(path, tensors);

  const auto back = mb::load_checkpoint(path);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].name == tensors[i].name);
    CHECK(back[i].tensor.shape == tensors[i].tensor.shape);
    CHECK(back[i].tensor.data == tensors[i].tensor.data);  // exact float equality
  }

  // Saving the same content twice produces identical bytes.
  const std::string path2 = tmp.file("b.ckpt");
  mb::save_checkpoint(path2, tensors);
  CHECK(slurp(path) == slurp(path2));
  CHECK(mb::sha256_file(path) == mb::sha256_file(path2));
}

TEST_CASE("checkpoint header starts with the magic and version") {
  TempDir tmp;
  const std::string path = tmp.file("h.ckpt");
  mb::save_checkpoint(path, {{"x", mb::tensor_scalar(1.0f)}});
  const std::string bytes = slurp(path);
  REQUIRE(bytes.size() >= 8);
  CHECK(bytes.substr(0, 4) == "MBCK");
}

TEST_CASE("checkpoint loader rejects damage") {
  TempDir tmp;
  const std::string path = tmp.file("d.ckpt");
  mb::save_checkpoint(path, {{"w", random_tensor(mb::Shape{4, 4}, 3)}});
  const std::string good = slurp(path);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    spit(path, bad);
    CHECK_THROWS_WITH_AS(mb::load_checkpoint(path), doctest::Contains("magic"),
                         std::runtime_error);
  }
  SUBCASE("truncated payload") {
    spit(path, good.substr(0, good.size() - 7));
    CHECK_THROWS_WITH_AS(mb::load_checkpoint(path), doctest::Contains("truncated"),
                         std::runtime_error);
  }
  SUBCASE("trailing garbage") {
    spit(path, good + "zz");
    CHECK_THROWS_WITH_AS(mb::load_checkpoint(path), doctest::Contains("trailing"),
                         std::runtime_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_WITH_AS(mb::load_checkpoint(tmp.file("nope.ckpt")),
                         doctest::Contains("cannot open"), std::runtime_error);
  }
  SUBCASE("flipped payload byte changes the digest") {
    std::string bad = good;
    bad[good.size() - 1] = static_cast<char>(bad[good.size() - 1] ^ 0x01);
    spit(path, bad);
    CHECK(mb::sha256_hex(bad) != mb::sha256_hex(good));
  }
}

TEST_CASE("save_params and load_params enforce the strict schema") {
  TempDir tmp;
  const std::string path = tmp.file("p.ckpt");
  mb::Parameter w("w", random_tensor(mb::Shape{2, 3}, 4));
  mb::Parameter b("b", random_tensor(mb::Shape{3}, 5));
  mb::save_params(path, {&w, &b});

  mb::Parameter w2("w", mb::Tensor(mb::Shape{2, 3}));
  mb::Parameter b2("b", mb::Tensor(mb::Shape{3}));
  mb::load_params(path, {&w2, &b2});
  CHECK(w2.value.data == w.value.data);
  CHECK(b2.value.data == b.value.data);

  SUBCASE("missing tensor") {
    mb::Parameter extra("missing_one", mb::Tensor(mb::Shape{3}));
    CHECK_THROWS_WITH_AS(mb::load_params(path, {&w2, &b2, &extra}),
                         doctest::Contains("missing_one"), std::runtime_error);
  }
  SUBCASE("shape mismatch") {
    mb::Parameter wrong("w", mb::Tensor(mb::Shape{3, 2}));
    CHECK_THROWS_WITH_AS(mb::load_params(path, {&wrong, &b2}),
                         doctest::Contains("shape mismatch"), std::runtime_error);
  }
  SUBCASE("count mismatch") {
    CHECK_THROWS_WITH_AS(mb::load_params(path, {&w2}), doctest::Contains("holds"),
                         std::runtime_error);
  }
}

TEST_CASE("sha256 matches the published test vectors") {
  CHECK(mb::sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(mb::sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  TempDir tmp;
  const std::string path = tmp.file("abc.txt");
  spit(path, "abc");
  CHECK(mb::sha256_file(path) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("jsonl files round trip records line by line") {
  TempDir tmp;
  const std::string path = tmp.file("r.jsonl");
  std::vector<nlohmann::json> records = {
      {{"id", "s1"}, {"caption", "a dog barks"}},
      {{"id", "s2"}, {"caption", "rain falls"}, {"features", {0.25, -1.5}}},
  };
  mb::write_jsonl(path, records);
  const auto back = mb::read_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == records[0]);
  CHECK(back[1] == records[1]);

  // One record per line, newline terminated.
  const std::string bytes = slurp(path);
  CHECK(std::count(bytes.begin(), bytes.end(), '\n') == 2);
  CHECK(bytes.back() == '\n');
}

TEST_CASE("json file helpers round trip and reject bad input") {
  TempDir tmp;
  const std::string path = tmp.file("c.json");
  const nlohmann::json j = {{"seed", 7}, {"noise_std", 0.015}};
  mb::write_json_file(path, j);
  CHECK(mb::read_json_file(path) == j);
  spit(path, "{not json");
  CHECK_THROWS(mb::read_json_file(path));
  CHECK_THROWS(mb::read_json_file(tmp.file("absent.json")));
}
