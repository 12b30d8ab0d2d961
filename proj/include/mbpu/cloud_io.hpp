// XYZ and ASCII-PLY point cloud readers/writers.
//
// XYZ: one point per line, three whitespace-separated decimals, '#' comments.
// PLY: ASCII 1.0, element "vertex" with x/y/z properties; everything else is
// skipped on read and never written. Writers emit 17 significant digits so a
// save/load round trip is bit-exact.
#ifndef MBPU_CLOUD_IO_HPP
#define MBPU_CLOUD_IO_HPP

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mbpu/geometry.hpp"

namespace mbpu {

enum class CloudFormat { Xyz, PlyAscii };

/// Chooses a format from the file extension (.ply -> PLY, anything else XYZ).
inline CloudFormat detect_cloud_format(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot != std::string::npos) {
    std::string ext = path.substr(dot + 1);
    for (char& ch : ext) ch = static_cast<char>(std::tolower(ch));
    if (ext == "ply") return CloudFormat::PlyAscii;
  }
  return CloudFormat::Xyz;
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) fields.push_back(tok);
  return fields;
}

inline double parse_coord(const std::string& tok, const std::string& path,
                          std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    fail(path, ": parse error at line ", line_no, ": bad number '", tok, "'");
  }
  require(used == tok.size() && std::isfinite(v), path,
          ": parse error at line ", line_no, ": bad number '", tok, "'");
  return v;
}

}  // namespace detail

inline PointCloud load_xyz(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open '", path, "'");
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = detail::split_fields(line);
    if (fields.empty() || fields[0][0] == '#') continue;
    require(fields.size() == 3, path, ": parse error at line ", line_no,
            ": expected 3 fields, got ", fields.size());
    cloud.points.push_back({detail::parse_coord(fields[0], path, line_no),
                            detail::parse_coord(fields[1], path, line_no),
                            detail::parse_coord(fields[2], path, line_no)});
  }
  require(!cloud.empty(), path, ": no points found");
  return cloud;
}

inline PointCloud load_ply_ascii(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open '", path, "'");
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() {
    require(static_cast<bool>(std::getline(in, line)), path,
            ": parse error at line ", line_no + 1, ": unexpected end of file");
    ++line_no;
  };

  next_line();
  require(detail::split_fields(line) == std::vector<std::string>{"ply"}, path,
          ": parse error at line ", line_no, ": not a PLY file");

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;
  };
  std::vector<Element> elements;
  bool ascii = false;
  while (true) {
    next_line();
    auto fields = detail::split_fields(line);
    if (fields.empty()) continue;
    if (fields[0] == "comment") continue;
    if (fields[0] == "format") {
      require(fields.size() >= 2 && fields[1] == "ascii", path,
              ": parse error at line ", line_no, ": only ascii PLY supported");
      ascii = true;
    } else if (fields[0] == "element") {
      require(fields.size() == 3, path, ": parse error at line ", line_no,
              ": malformed element");
      elements.push_back(
          {fields[1], static_cast<std::size_t>(std::stoull(fields[2])), {}});
    } else if (fields[0] == "property") {
      require(!elements.empty() && fields.size() >= 2, path,
              ": parse error at line ", line_no, ": property before element");
      elements.back().properties.push_back(fields.back());
    } else if (fields[0] == "end_header") {
      break;
    } else {
      fail(path, ": parse error at line ", line_no, ": unknown header entry '",
           fields[0], "'");
    }
  }
  require(ascii, path, ": missing 'format ascii' header");

  PointCloud cloud;
  for (const Element& el : elements) {
    if (el.name != "vertex") {
      for (std::size_t i = 0; i < el.count; ++i) next_line();
      continue;
    }
    std::size_t xi = el.properties.size(), yi = xi, zi = xi;
    for (std::size_t i = 0; i < el.properties.size(); ++i) {
      if (el.properties[i] == "x") xi = i;
      if (el.properties[i] == "y") yi = i;
      if (el.properties[i] == "z") zi = i;
    }
    require(xi < el.properties.size() && yi < el.properties.size() &&
                zi < el.properties.size(),
            path, ": vertex element lacks x/y/z properties");
    for (std::size_t i = 0; i < el.count; ++i) {
      next_line();
      auto fields = detail::split_fields(line);
      require(fields.size() >= el.properties.size(), path,
              ": parse error at line ", line_no, ": expected ",
              el.properties.size(), " fields, got ", fields.size());
      cloud.points.push_back({detail::parse_coord(fields[xi], path, line_no),
                              detail::parse_coord(fields[yi], path, line_no),
                              detail::parse_coord(fields[zi], path, line_no)});
    }
  }
  require(!cloud.empty(), path, ": no vertex points found");
  return cloud;
}

inline PointCloud load_cloud(const std::string& path, CloudFormat fmt) {
  return fmt == CloudFormat::Xyz ? load_xyz(path) : load_ply_ascii(path);
}

inline PointCloud load_cloud(const std::string& path) {
  return load_cloud(path, detect_cloud_format(path));
}

namespace detail {
inline std::string coord_str(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

inline void save_xyz(const PointCloud& c, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write '", path, "'");
  for (const Point3& p : c.points)
    out << detail::coord_str(p.x) << ' ' << detail::coord_str(p.y) << ' '
        << detail::coord_str(p.z) << '\n';
  require(out.good(), "write failed for '", path, "'");
}

inline void save_ply_ascii(const PointCloud& c, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write '", path, "'");
  out << "ply\nformat ascii 1.0\nelement vertex " << c.count()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  for (const Point3& p : c.points)
    out << detail::coord_str(p.x) << ' ' << detail::coord_str(p.y) << ' '
        << detail::coord_str(p.z) << '\n';
  require(out.good(), "write failed for '", path, "'");
}

inline void save_cloud(const PointCloud& c, const std::string& path,
                       CloudFormat fmt) {
  if (fmt == CloudFormat::Xyz)
    save_xyz(c, path);
  else
    save_ply_ascii(c, path);
}

inline void save_cloud(const PointCloud& c, const std::string& path) {
  save_cloud(c, path, detect_cloud_format(path));
}

}  // namespace mbpu

#endif  // MBPU_CLOUD_IO_HPP
