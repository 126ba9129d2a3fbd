#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <fstream>

#include "banknet/weights.hpp"
#include "banknet/zoo.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace bnk;
using testutil::TempDir;

namespace {

// Random tensors at float32 granularity: the file stores f32 values, so
// bitwise round trips are asserted on f32-representable contents.
ParamStore random_store(SplitMix64& rng) {
  ParamStore store;
  const int tensors = 1 + static_cast<int>(rng.next_below(6));
  for (int t = 0; t < tensors; ++t) {
    const int rank = 1 + static_cast<int>(rng.next_below(4));
    std::vector<int> shape;
    for (int d = 0; d < rank; ++d) shape.push_back(1 + static_cast<int>(rng.next_below(5)));
    Tensor tensor(shape);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      tensor[i] = static_cast<double>(static_cast<float>(rng.uniform(-2.0, 2.0)));
    }
    store.add("layer" + std::to_string(t) + "/param", std::move(tensor));
  }
  return store;
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("save/load round trip is bitwise for f32-representable stores") {
  TempDir dir;
  SplitMix64 rng(100);
  for (int trial = 0; trial < 25; ++trial) {
    const ParamStore store = random_store(rng);
    const auto path = dir / ("w" + std::to_string(trial) + ".bnkw");
    save_weights(store, path);
    const ParamStore back = load_weights(path);
    REQUIRE(back.names() == store.names());
    for (const std::string& name : store.names()) {
      CHECK(testutil::bitwise_equal(back.at(name), store.at(name)));
    }
  }
}

TEST_CASE("save(load(file)) reproduces the file byte for byte") {
  TempDir dir;
  SplitMix64 rng(101);
  const ParamStore store = random_store(rng);
  save_weights(store, dir / "a.bnkw");
  const ParamStore back = load_weights(dir / "a.bnkw");
  save_weights(back, dir / "b.bnkw");
  CHECK(slurp(dir / "a.bnkw") == slurp(dir / "b.bnkw"));
}

TEST_CASE("truncated and corrupted files fail with checksum errors, not crashes") {
  TempDir dir;
  SplitMix64 rng(102);
  save_weights(random_store(rng), dir / "w.bnkw");
  std::vector<std::uint8_t> bytes = slurp(dir / "w.bnkw");

  SUBCASE("truncated") {
    bytes.resize(bytes.size() / 2);
    spit(dir / "t.bnkw", bytes);
    try {
      load_weights(dir / "t.bnkw");
      FAIL("expected WeightError");
    } catch (const WeightError& e) {
      CHECK(e.kind == WeightError::Kind::bad_checksum);
    }
  }
  SUBCASE("single byte flipped") {
    bytes[bytes.size() / 2] ^= 0x40;
    spit(dir / "c.bnkw", bytes);
    try {
      load_weights(dir / "c.bnkw");
      FAIL("expected WeightError");
    } catch (const WeightError& e) {
      CHECK(e.kind == WeightError::Kind::bad_checksum);
    }
  }
  SUBCASE("nearly empty file") {
    spit(dir / "e.bnkw", {0x42, 0x4e});
    try {
      load_weights(dir / "e.bnkw");
      FAIL("expected WeightError");
    } catch (const WeightError& e) {
      CHECK(e.kind == WeightError::Kind::bad_checksum);
    }
  }
}

TEST_CASE("wrong magic is its own category") {
  TempDir dir;
  SplitMix64 rng(103);
  save_weights(random_store(rng), dir / "w.bnkw");
  std::vector<std::uint8_t> bytes = slurp(dir / "w.bnkw");
  bytes[0] = 'X';
  spit(dir / "x.bnkw", bytes);
  try {
    load_weights(dir / "x.bnkw");
    FAIL("expected WeightError");
  } catch (const WeightError& e) {
    CHECK(e.kind == WeightError::Kind::bad_magic);
  }
  try {
    load_weights(dir / "does_not_exist.bnkw");
    FAIL("expected WeightError");
  } catch (const WeightError& e) {
    CHECK(e.kind == WeightError::Kind::open_failed);
  }
}

namespace {

// Minimal independent writer: assembles the byte layout by hand with its own
// bit-at-a-time CRC, no library calls.
std::uint32_t crc32_bitwise(const std::vector<std::uint8_t>& bytes) {
  std::uint32_t crc = 0xffffffffu;
  for (std::uint8_t b : bytes) {
    crc ^= b;
    for (int k = 0; k < 8; ++k) crc = (crc & 1) ? (crc >> 1) ^ 0xedb88320u : crc >> 1;
  }
  return crc ^ 0xffffffffu;
}

void push_le32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 24) & 0xff);
}

}  // namespace

TEST_CASE("a file assembled by an independent writer loads to the expected tensors") {
  std::vector<std::uint8_t> bytes = {'B', 'N', 'K', 'W'};
  push_le32(bytes, 1);  // version
  push_le32(bytes, 1);  // one tensor
  const std::string name = "fc/weight";
  bytes.push_back(static_cast<std::uint8_t>(name.size()));
  bytes.push_back(0);
  bytes.insert(bytes.end(), name.begin(), name.end());
  bytes.push_back(2);  // rank
  push_le32(bytes, 2);
  push_le32(bytes, 3);
  const float values[6] = {1.0f, -2.5f, 0.0f, 3.25f, -0.125f, 42.0f};
  for (float f : values) {
    std::uint32_t u;
    static_assert(sizeof(u) == sizeof(f));
    std::memcpy(&u, &f, 4);
    push_le32(bytes, u);
  }
  push_le32(bytes, crc32_bitwise(bytes));

  TempDir dir;
  spit(dir / "fixture.bnkw", bytes);
  const ParamStore store = load_weights(dir / "fixture.bnkw");
  REQUIRE(store.size() == 1);
  REQUIRE(store.has("fc/weight"));
  const Tensor& t = store.at("fc/weight");
  CHECK(t.shape() == std::vector<int>{2, 3});
  for (int i = 0; i < 6; ++i) {
    CHECK(t[static_cast<std::size_t>(i)] == static_cast<double>(values[i]));
  }

  SUBCASE("patched version field fails as bad_version") {
    bytes[4] = 9;  // bump version, then fix the checksum
    bytes.resize(bytes.size() - 4);
    push_le32(bytes, crc32_bitwise(bytes));
    spit(dir / "v9.bnkw", bytes);
    try {
      load_weights(dir / "v9.bnkw");
      FAIL("expected WeightError");
    } catch (const WeightError& e) {
      CHECK(e.kind == WeightError::Kind::bad_version);
    }
  }
}

TEST_CASE("loading against a model validates names and shapes") {
  TempDir dir;
  const ModelSpec model = build_classifier_head(8, 3, 0.125);
  const ParamStore params = init_params(model, 7);
  save_weights(params, dir / "head.bnkw");

  const ParamStore ok = load_weights(dir / "head.bnkw", model);
  CHECK(ok.size() == params.size());

  const ModelSpec other = build_classifier_head(9, 3, 0.125);
  try {
    load_weights(dir / "head.bnkw", other);
    FAIL("expected WeightError");
  } catch (const WeightError& e) {
    CHECK(e.kind == WeightError::Kind::shape_mismatch);
  }

  const ModelSpec fewer = build_classifier_head(8, 3, 0.01);
  // same layer names but different widths -> shape mismatch as well
  try {
    load_weights(dir / "head.bnkw", fewer);
    FAIL("expected WeightError");
  } catch (const WeightError& e) {
    CHECK(e.kind == WeightError::Kind::shape_mismatch);
  }
}

TEST_CASE("peek lists names and shapes in declaration order") {
  TempDir dir;
  const ModelSpec model = build_classifier_head(4, 2, 0.01);
  save_weights(init_params(model, 1), dir / "p.bnkw");
  const std::vector<WeightEntry> entries = peek_weights(dir / "p.bnkw");
  REQUIRE(!entries.empty());
  CHECK(entries[0].name == "head_fc1/weight");
  CHECK(entries[0].shape == std::vector<int>{4, 10});  // round(0.01 * 1024) = 10
}
