#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "fmseg/checkpoint.hpp"
#include "fmseg/io_util.hpp"
#include "fmseg/rng.hpp"

using namespace fmseg;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("checkpoint round-trips tensors and metadata") {
  RngStream rng(3, "ckpt");
  Tensor a({3, 4});
  Tensor b({7});
  for (double& v : a.values()) v = rng.uniform(-2.0, 2.0);
  for (double& v : b.values()) v = rng.uniform(-2.0, 2.0);

  const std::string path = temp_path("fmseg_ckpt_test.bin");
  save_checkpoint(path, R"({"note":"x","n":3})", {{"a", &a}, {"b", &b}});
  Checkpoint ck = load_checkpoint(path);

  REQUIRE(ck.tensors.count("a") == 1);
  REQUIRE(ck.tensors.count("b") == 1);
  CHECK(ck.tensors["a"].shape() == a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(ck.tensors["a"][i] == static_cast<double>(static_cast<float>(a[i])));
  CHECK(ck.meta_json.find("\"note\":\"x\"") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint save-load-save is byte identical") {
  RngStream rng(9, "ckpt2");
  Tensor a({5, 5});
  for (double& v : a.values()) v = rng.uniform(-1.0, 1.0);
  const std::string p1 = temp_path("fmseg_ckpt_rt1.bin");
  const std::string p2 = temp_path("fmseg_ckpt_rt2.bin");
  save_checkpoint(p1, R"({"k":1})", {{"a", &a}});

  Checkpoint ck = load_checkpoint(p1);
  save_checkpoint(p2, ck.meta_json, {{"a", &ck.tensors["a"]}});
  CHECK(read_text_file(p1) == read_text_file(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("loading a missing checkpoint reports a missing input") {
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/nowhere.ckpt"), MissingInputError);
}
