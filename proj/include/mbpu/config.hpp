// Flat "key = value" config files and the resolved training configuration.
// Unknown keys are errors; every key has a default that prints back out.
#ifndef MBPU_CONFIG_HPP
#define MBPU_CONFIG_HPP

#include <fstream>
#include <sstream>

#include "mbpu/extractor.hpp"
#include "mbpu/renderer.hpp"
#include "mbpu/shapes.hpp"

namespace mbpu {

struct LossConfig {
  double alpha = 0.01;  // view-loss weight
  double beta = 1.0;    // Chamfer-loss weight
};

struct TrainConfig {
  std::size_t epochs = 50;
  double learning_rate = 2e-3;
  std::uint64_t seed = 1;
  std::size_t batch_size = 1;
  std::vector<ShapeKind> shapes = {ShapeKind::Sphere, ShapeKind::Torus,
                                   ShapeKind::Cube, ShapeKind::Cylinder,
                                   ShapeKind::Cone};
  std::size_t points_per_shape = 256;
  double rate = 4.0;
  LossConfig loss;
  std::size_t views = 32;
  RenderConfig render;  // width/height/depth_bins/sigma
  ArchConfig arch;
  // Extra supervision passes for the distance head at the shifted positions
  // (with the fed-back distance populated); 0 disables.
  std::size_t distance_passes = 1;
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out{};
  is >> out;
  require(!is.fail(), "config: bad value '", value, "' for key '", key, "'");
  std::string rest;
  is >> rest;
  require(rest.empty(), "config: trailing junk '", rest, "' for key '", key,
          "'");
  return out;
}

inline std::vector<ShapeKind> parse_shape_list(const std::string& value) {
  std::vector<ShapeKind> out;
  std::istringstream is(value);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    // trim
    const auto a = tok.find_first_not_of(" \t");
    const auto b = tok.find_last_not_of(" \t");
    require(a != std::string::npos, "config: empty shape name in list");
    out.push_back(parse_shape_name(tok.substr(a, b - a + 1)));
  }
  require(!out.empty(), "config: empty shape list");
  return out;
}

}  // namespace detail

inline void apply_config_entry(TrainConfig& cfg, const std::string& key,
                               const std::string& value) {
  using detail::parse_number;
  if (key == "epochs") cfg.epochs = parse_number<std::size_t>(key, value);
  else if (key == "learning_rate") cfg.learning_rate = parse_number<double>(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "shapes") cfg.shapes = detail::parse_shape_list(value);
  else if (key == "points_per_shape") cfg.points_per_shape = parse_number<std::size_t>(key, value);
  else if (key == "rate") cfg.rate = parse_number<double>(key, value);
  else if (key == "alpha") cfg.loss.alpha = parse_number<double>(key, value);
  else if (key == "beta") cfg.loss.beta = parse_number<double>(key, value);
  else if (key == "views") cfg.views = parse_number<std::size_t>(key, value);
  else if (key == "image_width") cfg.render.width = parse_number<std::size_t>(key, value);
  else if (key == "image_height") cfg.render.height = parse_number<std::size_t>(key, value);
  else if (key == "depth_bins") cfg.render.depth_bins = parse_number<std::size_t>(key, value);
  else if (key == "sigma") cfg.render.sigma = parse_number<double>(key, value);
  else if (key == "init_channels") cfg.arch.init_channels = parse_number<std::size_t>(key, value);
  else if (key == "mixer_channels") cfg.arch.mixer_channels = parse_number<std::size_t>(key, value);
  else if (key == "transition_channels") cfg.arch.transition_channels = parse_number<std::size_t>(key, value);
  else if (key == "state_dim") cfg.arch.state_dim = parse_number<std::size_t>(key, value);
  else if (key == "conv_width") cfg.arch.conv_width = parse_number<std::size_t>(key, value);
  else if (key == "expand") cfg.arch.expand = parse_number<std::size_t>(key, value);
  else if (key == "k_conv") cfg.arch.k_conv = parse_number<std::size_t>(key, value);
  else if (key == "k_midpoint") cfg.arch.k_midpoint = parse_number<std::size_t>(key, value);
  else if (key == "trunk_hidden") cfg.arch.trunk_hidden = parse_number<std::size_t>(key, value);
  else if (key == "distance_passes") cfg.distance_passes = parse_number<std::size_t>(key, value);
  else fail("config: unknown key '", key, "'");
}

inline TrainConfig parse_config(std::istream& in, const std::string& origin) {
  TrainConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, origin, ": line ", line_no,
            ": expected 'key = value'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty() && !value.empty(), origin, ": line ", line_no,
            ": expected 'key = value'");
    apply_config_entry(cfg, key, value);
  }
  return cfg;
}

inline TrainConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config file '", path, "'");
  return parse_config(in, path);
}

/// The full resolved configuration in re-parseable form.
inline std::string config_to_string(const TrainConfig& c) {
  std::ostringstream os;
  os << "epochs = " << c.epochs << "\n";
  os << "learning_rate = " << c.learning_rate << "\n";
  os << "seed = " << c.seed << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "shapes = ";
  for (std::size_t i = 0; i < c.shapes.size(); ++i)
    os << (i ? "," : "") << shape_name(c.shapes[i]);
  os << "\n";
  os << "points_per_shape = " << c.points_per_shape << "\n";
  os << "rate = " << c.rate << "\n";
  os << "alpha = " << c.loss.alpha << "\n";
  os << "beta = " << c.loss.beta << "\n";
  os << "views = " << c.views << "\n";
  os << "image_width = " << c.render.width << "\n";
  os << "image_height = " << c.render.height << "\n";
  os << "depth_bins = " << c.render.depth_bins << "\n";
  os << "sigma = " << c.render.sigma << "\n";
  os << "init_channels = " << c.arch.init_channels << "\n";
  os << "mixer_channels = " << c.arch.mixer_channels << "\n";
  os << "transition_channels = " << c.arch.transition_channels << "\n";
  os << "state_dim = " << c.arch.state_dim << "\n";
  os << "conv_width = " << c.arch.conv_width << "\n";
  os << "expand = " << c.arch.expand << "\n";
  os << "k_conv = " << c.arch.k_conv << "\n";
  os << "k_midpoint = " << c.arch.k_midpoint << "\n";
  os << "trunk_hidden = " << c.arch.trunk_hidden << "\n";
  os << "distance_passes = " << c.distance_passes << "\n";
  return os.str();
}

}  // namespace mbpu

#endif  // MBPU_CONFIG_HPP
