#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pidaudit/checkpoint.hpp"
#include "pidaudit/error.hpp"

using namespace pidaudit;
namespace fs = std::filesystem;

namespace {

Model trained_like_model() {
  ModelConfig mc;
  mc.embed_dim = 16;
  mc.heads = 4;
  mc.layers = 2;
  mc.context = 6;
  mc.input_dim = 3;
  mc.ffn_enabled = false;
  Model m(mc, 42);
  CounterRng rng(1);
  for (auto& p : m.params())
    for (double& v : p.value.values()) v += 0.05 * rng.normal();
  m.input_center = {0.001, -0.002, 0.0005};
  m.input_scale = {0.01, 0.02, 0.015};
  m.round_to_float32();
  return m;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("pidaudit_" + name); }

std::vector<char> read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_all(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("config text round trip") {
  ModelConfig mc;
  mc.embed_dim = 48;
  mc.dropout = 0.125;
  mc.ffn_enabled = false;
  CHECK(parse_model_config(serialize_model_config(mc)) == mc);
}

TEST_CASE("round trip reproduces predictions bitwise") {
  const Model m = trained_like_model();
  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(m, path);
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.model.config() == m.config());
  CHECK(loaded.model.seed() == 42);
  CHECK(!loaded.optimizer);
  for (std::size_t i = 0; i < m.params().size(); ++i) CHECK(loaded.model.params()[i].value == m.params()[i].value);
  CHECK(loaded.model.input_scale == m.input_scale);

  Tensor w({6, 3});
  CounterRng rng(2);
  for (double& v : w.values()) v = 0.01 * rng.normal();
  CHECK(predict_dist(loaded.model, w) == predict_dist(m, w));
  fs::remove(path);
}

TEST_CASE("optimizer state round trip") {
  const Model m = trained_like_model();
  AdamState st(AdamConfig{}, m.params());
  st.step = 17;
  st.m[0][0] = 0.25;
  st.v[1][0] = 0.5;
  const auto path = temp_file("optim.ckpt");
  save_checkpoint(m, path, &st);
  const auto loaded = load_checkpoint(path);
  REQUIRE(loaded.optimizer);
  CHECK(loaded.optimizer->step == 17);
  CHECK(loaded.optimizer->m[0][0] == 0.25);
  CHECK(loaded.optimizer->v[1][0] == 0.5);
  fs::remove(path);
}

TEST_CASE("corruption is detected and names the file") {
  const Model m = trained_like_model();
  const auto path = temp_file("corrupt.ckpt");
  save_checkpoint(m, path);
  const auto good = read_all(path);

  auto flipped = good;
  flipped[flipped.size() / 2] ^= 0x10;
  write_all(path, flipped);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains(path.string().c_str()), DataError);

  write_all(path, std::vector<char>(good.begin(), good.begin() + static_cast<long>(good.size() / 3)));
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  auto magic = good;
  magic[0] = 'X';
  write_all(path, magic);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains(path.string().c_str()), DataError);

  CHECK_THROWS_AS(load_checkpoint(temp_file("missing.ckpt")), DataError);
  fs::remove(path);
}
