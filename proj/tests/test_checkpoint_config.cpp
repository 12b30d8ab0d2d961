#include <filesystem>
#include <fstream>

#include "catch2/catch_amalgamated.hpp"
#include "mbpu/common.hpp"
#include "mbpu/config.hpp"
#include "mbpu/params.hpp"

using namespace mbpu;
namespace fs = std::filesystem;

namespace {

ArchConfig small_arch() {
  ArchConfig a;
  a.init_channels = 4;
  a.mixer_channels = 4;
  a.transition_channels = 6;
  a.state_dim = 2;
  a.conv_width = 3;
  a.expand = 2;
  a.k_conv = 3;
  a.k_midpoint = 5;
  a.trunk_hidden = 8;
  return a;
}

}  // namespace

TEST_CASE("checkpoint round trip is exact", "[checkpoint]") {
  Rng rng(11);
  NetworkParams params = make_network_params(small_arch(), rng);
  auto path = fs::temp_directory_path() / "mbpu_ckpt_test.bin";
  save_checkpoint(params, path.string());
  NetworkParams back = load_checkpoint(path.string());

  REQUIRE(back.arch.init_channels == params.arch.init_channels);
  REQUIRE(back.arch.k_midpoint == params.arch.k_midpoint);
  REQUIRE(back.arch.expand == params.arch.expand);

  NamedTensorList a = named_tensors(params);
  NamedTensorList b = named_tensors(back);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].first == b[i].first);
    REQUIRE(a[i].second->shape() == b[i].second->shape());
    for (std::size_t j = 0; j < a[i].second->size(); ++j)
      REQUIRE((*a[i].second)[j] == (*b[i].second)[j]);
  }
  fs::remove(path);
}

TEST_CASE("checkpoint writes are byte-stable", "[checkpoint]") {
  Rng rng(13);
  NetworkParams params = make_network_params(small_arch(), rng);
  auto p1 = fs::temp_directory_path() / "mbpu_ckpt_a.bin";
  auto p2 = fs::temp_directory_path() / "mbpu_ckpt_b.bin";
  save_checkpoint(params, p1.string());
  save_checkpoint(params, p2.string());
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  REQUIRE(!s1.empty());
  REQUIRE(s1 == s2);
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("checkpoint validation", "[checkpoint]") {
  REQUIRE_THROWS(load_checkpoint("/nonexistent/ckpt.bin"));
  auto path = fs::temp_directory_path() / "mbpu_bad_ckpt.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPEgarbage";
  }
  REQUIRE_THROWS_WITH(load_checkpoint(path.string()),
                      Catch::Matchers::ContainsSubstring("MBPU"));
  fs::remove(path);
}

TEST_CASE("config defaults round-trip through their printed form", "[config]") {
  TrainConfig defaults;
  std::istringstream is(config_to_string(defaults));
  TrainConfig parsed = parse_config(is, "<string>");
  REQUIRE(parsed.epochs == defaults.epochs);
  REQUIRE(parsed.learning_rate == defaults.learning_rate);
  REQUIRE(parsed.shapes == defaults.shapes);
  REQUIRE(parsed.render.width == defaults.render.width);
  REQUIRE(parsed.arch.k_conv == defaults.arch.k_conv);
  REQUIRE(parsed.loss.alpha == defaults.loss.alpha);
  REQUIRE(parsed.distance_passes == defaults.distance_passes);
}

TEST_CASE("config parsing accepts comments and whitespace", "[config]") {
  std::istringstream is(
      "# a comment\n"
      "\n"
      "epochs = 7\n"
      "  shapes = sphere , torus\n"
      "alpha=0.25\n");
  TrainConfig cfg = parse_config(is, "<string>");
  REQUIRE(cfg.epochs == 7);
  REQUIRE(cfg.shapes == std::vector<ShapeKind>{ShapeKind::Sphere,
                                               ShapeKind::Torus});
  REQUIRE(cfg.loss.alpha == 0.25);
}

TEST_CASE("config rejects unknown keys and bad values", "[config]") {
  std::istringstream a("nonsense_key = 3\n");
  REQUIRE_THROWS_WITH(parse_config(a, "<string>"),
                      Catch::Matchers::ContainsSubstring("nonsense_key"));
  std::istringstream b("epochs = banana\n");
  REQUIRE_THROWS(parse_config(b, "<string>"));
  std::istringstream c("epochs 7\n");
  REQUIRE_THROWS(parse_config(c, "<string>"));
  std::istringstream d("shapes = sphere,mystery\n");
  REQUIRE_THROWS_WITH(parse_config(d, "<string>"),
                      Catch::Matchers::ContainsSubstring("mystery"));
  REQUIRE_THROWS(parse_config_file("/nonexistent/config.cfg"));
}
