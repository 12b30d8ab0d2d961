#include <cstdio>
#include <filesystem>
#include <fstream>

#include "catch2/catch_amalgamated.hpp"
#include "mbpu/cloud_io.hpp"
#include "mbpu/common.hpp"

using namespace mbpu;
namespace fs = std::filesystem;

namespace {

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name, const std::string& contents = "") {
    path = fs::temp_directory_path() / ("mbpu_io_" + name);
    if (!contents.empty()) {
      std::ofstream out(path);
      out << contents;
    }
  }
  ~TempFile() {
    std::error_code ec;
    fs::remove(path, ec);
  }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("xyz parses one point per line", "[io]") {
  TempFile f("two.xyz", "0 0 0\n1 2 3\n");
  PointCloud c = load_xyz(f.str());
  REQUIRE(c.count() == 2);
  REQUIRE(c[0] == Point3{0, 0, 0});
  REQUIRE(c[1] == Point3{1, 2, 3});
}

TEST_CASE("xyz skips comments and blank lines", "[io]") {
  TempFile f("comments.xyz", "# header\n\n1 1 1\n  # indented comment\n2 2 2\n");
  PointCloud c = load_xyz(f.str());
  REQUIRE(c.count() == 2);
}

TEST_CASE("xyz reports the failing line", "[io]") {
  TempFile f("bad.xyz", "1 2\n");
  REQUIRE_THROWS_WITH(load_xyz(f.str()),
                      Catch::Matchers::ContainsSubstring("line 1"));
  TempFile g("bad2.xyz", "1 2 3\n4 nope 6\n");
  REQUIRE_THROWS_WITH(load_xyz(g.str()),
                      Catch::Matchers::ContainsSubstring("line 2"));
}

TEST_CASE("empty and missing files are errors", "[io]") {
  TempFile f("empty.xyz", "# nothing here\n");
  REQUIRE_THROWS(load_xyz(f.str()));
  REQUIRE_THROWS(load_xyz("/nonexistent/path/cloud.xyz"));
}

TEST_CASE("xyz round trip is bit exact", "[io][oracle]") {
  Rng rng(12);
  PointCloud c;
  for (int i = 0; i < 100; ++i)
    c.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1) * 1e-7,
                        rng.uniform(-1, 1) * 1e5});
  TempFile f("round.xyz");
  save_xyz(c, f.str());
  PointCloud back = load_xyz(f.str());
  REQUIRE(back.count() == c.count());
  for (std::size_t i = 0; i < c.count(); ++i) REQUIRE(back[i] == c[i]);
}

TEST_CASE("ply round trip is bit exact", "[io][oracle]") {
  Rng rng(13);
  PointCloud c;
  for (int i = 0; i < 50; ++i)
    c.points.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2),
                        rng.uniform(-2, 2)});
  TempFile f("round.ply");
  save_ply_ascii(c, f.str());
  PointCloud back = load_ply_ascii(f.str());
  REQUIRE(back.count() == c.count());
  for (std::size_t i = 0; i < c.count(); ++i) REQUIRE(back[i] == c[i]);
}

TEST_CASE("ply reader tolerates extra properties and elements", "[io]") {
  TempFile f("extra.ply",
             "ply\n"
             "format ascii 1.0\n"
             "comment made by hand\n"
             "element vertex 2\n"
             "property float nx\n"
             "property float x\n"
             "property float y\n"
             "property float z\n"
             "element face 1\n"
             "property list uchar int vertex_indices\n"
             "end_header\n"
             "9 1 2 3\n"
             "9 4 5 6\n"
             "3 0 1 0\n");
  PointCloud c = load_ply_ascii(f.str());
  REQUIRE(c.count() == 2);
  REQUIRE(c[0] == Point3{1, 2, 3});
  REQUIRE(c[1] == Point3{4, 5, 6});
}

TEST_CASE("binary ply is rejected", "[io]") {
  TempFile f("bin.ply",
             "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n");
  REQUIRE_THROWS_WITH(load_ply_ascii(f.str()),
                      Catch::Matchers::ContainsSubstring("ascii"));
}

TEST_CASE("format detection by extension", "[io]") {
  REQUIRE(detect_cloud_format("a/b/cloud.PLY") == CloudFormat::PlyAscii);
  REQUIRE(detect_cloud_format("cloud.xyz") == CloudFormat::Xyz);
  REQUIRE(detect_cloud_format("cloud.txt") == CloudFormat::Xyz);
}
