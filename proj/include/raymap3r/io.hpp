#pragma once

#include <png.h>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "raymap3r/error.hpp"
#include "raymap3r/eval.hpp"
#include "raymap3r/geom.hpp"
#include "raymap3r/grid.hpp"
#include "raymap3r/raymap.hpp"

// File formats: TUM trajectories, 16-bit depth and discrepancy PNGs, 8-bit mask PNGs,
// ASCII PLY and .npy ray maps.
namespace raymap3r::io {

namespace fs = std::filesystem;

/// Non-fatal conditions met while reading or writing (normalized quaternions, clamped depth).
using Warnings = std::vector<std::string>;

inline constexpr double kDefaultDepthScale = 5000.0;
inline constexpr double kDeltaScale = 1e4;  // discrepancy PNG: raw = 1 + round(delta * kDeltaScale)
inline constexpr double kQuaternionNormTolerance = 1e-3;
// Deviations below this are text rounding, not a malformed quaternion.
inline constexpr double kQuaternionSilentTolerance = 1e-6;

namespace detail {

inline void warn(Warnings* w, std::string msg) {
  if (w) w->push_back(std::move(msg));
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_integer(std::string_view s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) return std::nullopt;
  return v;
}

inline std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

inline std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, mode);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  return out;
}

inline std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  return in;
}

inline void finish_write(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// TUM trajectories: "timestamp tx ty tz qx qy qz qw", camera-to-world.

inline eval::Trajectory parse_trajectory(std::istream& in, const std::string& name = "<stream>",
                                         Warnings* warnings = nullptr) {
  eval::Trajectory traj;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = detail::split_ws(line);
    if (tok.empty() || tok.front().front() == '#') continue;
    if (tok.size() != 8) {
      throw ParseError(name, lineno, "expected 8 fields (timestamp tx ty tz qx qy qz qw), got " + std::to_string(tok.size()));
    }
    double v[8];
    for (int i = 0; i < 8; ++i) {
      const auto d = detail::parse_double(tok[static_cast<std::size_t>(i)]);
      if (!d) throw ParseError(name, lineno, "field " + std::to_string(i + 1) + " is not a finite number");
      v[i] = *d;
    }
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    const double norm = q.norm();
    const double dev = std::abs(norm - 1.0);
    if (dev > kQuaternionNormTolerance) {
      throw ParseError(name, lineno, "quaternion norm " + detail::format("%.6g", norm) + " is not within 1e-3 of 1");
    }
    if (dev > kQuaternionSilentTolerance) {
      detail::warn(warnings, name + ":" + std::to_string(lineno) + ": quaternion normalized (norm " +
                                 detail::format("%.9g", norm) + ")");
    }
    q.normalize();
    if (!traj.timestamps.empty() && !(v[0] > traj.timestamps.back())) {
      throw ParseError(name, lineno, "timestamps must strictly increase");
    }
    traj.push_back(v[0], RigidPose::from_camera_center(q.toRotationMatrix(), Eigen::Vector3d(v[1], v[2], v[3])));
  }
  if (in.bad()) throw IoError(name, "read failed");
  return traj;
}

inline eval::Trajectory read_trajectory(const fs::path& path, Warnings* warnings = nullptr) {
  auto in = detail::open_in(path);
  return parse_trajectory(in, path.string(), warnings);
}

/// One TUM line. Timestamps keep microseconds; pose values carry 9 significant digits.
inline std::string trajectory_line(double timestamp, const RigidPose& pose) {
  const Eigen::Vector3d c = pose.center();
  Eigen::Quaterniond q(pose.camera_to_world_rotation());
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  std::string s = detail::format("%.6f", timestamp);
  for (double x : {c.x(), c.y(), c.z(), q.x(), q.y(), q.z(), q.w()}) s += " " + detail::format("%.9g", x == 0.0 ? 0.0 : x);
  return s;
}

inline void write_trajectory(const eval::Trajectory& traj, std::ostream& out) {
  traj.validate();
  out << "# timestamp tx ty tz qx qy qz qw\n";
  for (std::size_t i = 0; i < traj.size(); ++i) out << trajectory_line(traj.timestamps[i], traj.poses[i]) << '\n';
}

inline void write_trajectory(const eval::Trajectory& traj, const fs::path& path) {
  auto out = detail::open_out(path);
  write_trajectory(traj, out);
  detail::finish_write(out, path);
}

// ---------------------------------------------------------------------------
// PNG images through the libpng simplified API.

namespace detail {

class PngRead {
 public:
  explicit PngRead(const fs::path& path) : path_(path.string()) {
    std::memset(&image_, 0, sizeof image_);
    image_.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image_, path_.c_str())) {
      const std::string msg = image_.message;
      png_image_free(&image_);
      throw IoError(path_, "cannot decode PNG: " + msg);
    }
  }
  ~PngRead() { png_image_free(&image_); }
  PngRead(const PngRead&) = delete;
  PngRead& operator=(const PngRead&) = delete;

  int width() const { return static_cast<int>(image_.width); }
  int height() const { return static_cast<int>(image_.height); }
  png_uint_32 format() const { return image_.format; }

  template <class T>
  std::vector<T> finish(png_uint_32 format) {
    image_.format = format;
    std::vector<T> buf(static_cast<std::size_t>(image_.width) * image_.height);
    if (!png_image_finish_read(&image_, nullptr, buf.data(), 0, nullptr)) {
      throw IoError(path_, std::string("cannot decode PNG: ") + image_.message);
    }
    return buf;
  }

 private:
  std::string path_;
  png_image image_;
};

template <class T>
void write_png(const fs::path& path, int width, int height, png_uint_32 format, const std::vector<T>& buf) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError(path.string(), "cannot write PNG: " + msg);
  }
  png_image_free(&image);
}

inline std::vector<std::uint16_t> read_gray16(const fs::path& path, int& width, int& height) {
  PngRead png(path);
  if (png.format() != PNG_FORMAT_LINEAR_Y) {
    throw IoError(path.string(), "expected a 16-bit single-channel PNG");
  }
  width = png.width();
  height = png.height();
  return png.finish<std::uint16_t>(PNG_FORMAT_LINEAR_Y);
}

}  // namespace detail

/// Raw 16-bit buffer of a depth map: round(depth * scale), 0 for invalid pixels.
inline std::vector<std::uint16_t> encode_depth(const DepthMap& depth, double scale = kDefaultDepthScale,
                                               Warnings* warnings = nullptr) {
  if (!(scale > 0.0)) throw Error("encode_depth: scale must be positive");
  std::vector<std::uint16_t> raw(depth.values.size(), 0);
  std::size_t clamped = 0, raised = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!depth.valid[i]) continue;
    const double r = std::round(depth.values[i] * scale);
    if (r > 65535.0) {
      raw[i] = 65535;
      ++clamped;
    } else if (r < 1.0) {
      raw[i] = 1;
      ++raised;
    } else {
      raw[i] = static_cast<std::uint16_t>(r);
    }
  }
  if (clamped) {
    detail::warn(warnings, std::to_string(clamped) + " depth values above " + detail::format("%.6g", 65535.0 / scale) +
                               " m clamped");
  }
  if (raised) detail::warn(warnings, std::to_string(raised) + " positive depth values below one raw unit raised to 1");
  return raw;
}

inline DepthMap decode_depth(const std::vector<std::uint16_t>& raw, int width, int height,
                             double scale = kDefaultDepthScale) {
  if (!(scale > 0.0)) throw Error("decode_depth: scale must be positive");
  if (raw.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw ShapeError("decode_depth: buffer size differs from width * height");
  }
  DepthMap d(width, height);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == 0) continue;
    d.values[i] = static_cast<double>(raw[i]) / scale;
    d.valid[i] = 1;
  }
  return d;
}

inline void write_depth_png(const DepthMap& depth, const fs::path& path, double scale = kDefaultDepthScale,
                            Warnings* warnings = nullptr) {
  detail::write_png(path, depth.width(), depth.height(), PNG_FORMAT_LINEAR_Y, encode_depth(depth, scale, warnings));
}

inline std::vector<std::uint16_t> read_depth_png_raw(const fs::path& path, int& width, int& height) {
  return detail::read_gray16(path, width, height);
}

inline DepthMap read_depth_png(const fs::path& path, double scale = kDefaultDepthScale) {
  int w = 0, h = 0;
  const auto raw = detail::read_gray16(path, w, h);
  return decode_depth(raw, w, h, scale);
}

/// 8-bit mask; stored as 0/255, read back as nonzero -> 1.
inline void write_mask_png(const Grid<std::uint8_t>& mask, const fs::path& path) {
  std::vector<std::uint8_t> buf(mask.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask[i] ? 255 : 0;
  detail::write_png(path, mask.width(), mask.height(), PNG_FORMAT_GRAY, buf);
}

inline Grid<std::uint8_t> read_mask_png(const fs::path& path) {
  detail::PngRead png(path);
  if (png.format() != PNG_FORMAT_GRAY) throw IoError(path.string(), "expected an 8-bit single-channel PNG");
  const auto buf = png.finish<std::uint8_t>(PNG_FORMAT_GRAY);
  Grid<std::uint8_t> mask(png.width(), png.height(), 0);
  for (std::size_t i = 0; i < buf.size(); ++i) mask[i] = buf[i] ? 1 : 0;
  return mask;
}

/// Discrepancy map as 16-bit PNG: 0 marks excluded pixels, otherwise 1 + round(delta * 1e4).
inline void write_delta_png(const Grid<double>& delta, const Grid<std::uint8_t>& included, const fs::path& path) {
  require_same_shape(delta, included, "write_delta_png");
  std::vector<std::uint16_t> buf(delta.size(), 0);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    if (!included[i]) continue;
    const double r = 1.0 + std::round(std::max(delta[i], 0.0) * kDeltaScale);
    buf[i] = static_cast<std::uint16_t>(std::min(r, 65535.0));
  }
  detail::write_png(path, delta.width(), delta.height(), PNG_FORMAT_LINEAR_Y, buf);
}

struct DeltaImage {
  Grid<double> delta;
  Grid<std::uint8_t> included;
};

inline DeltaImage read_delta_png(const fs::path& path) {
  int w = 0, h = 0;
  const auto raw = detail::read_gray16(path, w, h);
  DeltaImage out{Grid<double>(w, h, 0.0), Grid<std::uint8_t>(w, h, 0)};
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == 0) continue;
    out.delta[i] = static_cast<double>(raw[i] - 1) / kDeltaScale;
    out.included[i] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// ASCII PLY.

namespace detail {

inline std::string ply_header(std::size_t count, bool normals, bool weights) {
  std::string h =
      "ply\n"
      "format ascii 1.0\n"
      "comment generated by raymap3r\n"
      "comment units meters\n"
      "comment frame world\n"
      "comment axes x right, y down, z forward\n";
  h += "element vertex " + std::to_string(count) + "\n";
  h += "property double x\nproperty double y\nproperty double z\n";
  if (normals) h += "property double nx\nproperty double ny\nproperty double nz\n";
  if (weights) h += "property double confidence\n";
  h += "element face 0\nproperty list uchar int vertex_indices\nend_header\n";
  return h;
}

inline std::string ply_vertex(const Eigen::Vector3d& p, const Eigen::Vector3d* n, const double* w) {
  std::string s = format("%.12g", p.x()) + " " + format("%.12g", p.y()) + " " + format("%.12g", p.z());
  if (n) s += " " + format("%.9g", n->x()) + " " + format("%.9g", n->y()) + " " + format("%.9g", n->z());
  if (w) s += " " + format("%.9g", *w);
  return s + "\n";
}

}  // namespace detail

inline void write_ply(const PointCloud& cloud, std::ostream& out) {
  if (cloud.empty()) throw Error("write_ply: empty cloud");
  cloud.validate();
  out << detail::ply_header(cloud.size(), cloud.has_normals(), cloud.has_weights());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << detail::ply_vertex(cloud.points[i], cloud.has_normals() ? &cloud.normals[i] : nullptr,
                              cloud.has_weights() ? &cloud.weights[i] : nullptr);
  }
}

inline void write_ply(const PointCloud& cloud, const fs::path& path) {
  auto out = detail::open_out(path);
  write_ply(cloud, out);
  detail::finish_write(out, path);
}

/// Reads ASCII PLY vertices (x y z, optional nx ny nz and confidence). Other elements must be empty.
inline PointCloud parse_ply(std::istream& in, const std::string& name = "<stream>") {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&](const char* expecting) {
    if (!std::getline(in, line)) throw ParseError(name, lineno, std::string("unexpected end of file, expected ") + expecting);
    ++lineno;
    return detail::split_ws(line);
  };

  auto tok = next("'ply'");
  if (tok.size() != 1 || tok[0] != "ply") throw ParseError(name, lineno, "missing 'ply' magic");

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;
  };
  std::vector<Element> elements;
  bool ascii = false;
  for (;;) {
    tok = next("header line");
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() != 3) throw ParseError(name, lineno, "malformed format line");
      if (tok[1] != "ascii") throw ParseError(name, lineno, "only ascii PLY is supported");
      ascii = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError(name, lineno, "malformed element line");
      const auto n = detail::parse_integer(tok[2]);
      if (!n || *n < 0) throw ParseError(name, lineno, "element count is not a non-negative integer");
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(*n), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError(name, lineno, "property before any element");
      if (tok.size() >= 2 && tok[1] == "list") {
        if (tok.size() != 5) throw ParseError(name, lineno, "malformed list property");
        if (elements.back().name == "vertex") throw ParseError(name, lineno, "list properties on vertices are not supported");
        elements.back().props.push_back(std::string(tok[4]));
      } else {
        if (tok.size() != 3) throw ParseError(name, lineno, "malformed property line");
        elements.back().props.push_back(std::string(tok[2]));
      }
    } else {
      throw ParseError(name, lineno, "unknown header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!ascii) throw ParseError(name, lineno, "missing format line");

  PointCloud cloud;
  for (const auto& el : elements) {
    if (el.name != "vertex") {
      if (el.count != 0) throw ParseError(name, lineno, "element '" + el.name + "' must be empty");
      continue;
    }
    auto index_of = [&](const char* p) -> int {
      const auto it = std::find(el.props.begin(), el.props.end(), p);
      return it == el.props.end() ? -1 : static_cast<int>(it - el.props.begin());
    };
    const int ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
    if (ix < 0 || iy < 0 || iz < 0) throw ParseError(name, lineno, "vertex element lacks x, y or z");
    const int inx = index_of("nx"), iny = index_of("ny"), inz = index_of("nz");
    const bool normals = inx >= 0 && iny >= 0 && inz >= 0;
    const int iw = index_of("confidence");
    cloud.points.reserve(el.count);
    for (std::size_t v = 0; v < el.count; ++v) {
      tok = next("vertex line");
      if (tok.size() != el.props.size()) {
        throw ParseError(name, lineno, "expected " + std::to_string(el.props.size()) + " values, got " + std::to_string(tok.size()));
      }
      auto value = [&](int i) {
        const auto d = detail::parse_double(tok[static_cast<std::size_t>(i)]);
        if (!d) throw ParseError(name, lineno, "value " + std::to_string(i + 1) + " is not a finite number");
        return *d;
      };
      cloud.points.emplace_back(value(ix), value(iy), value(iz));
      if (normals) cloud.normals.emplace_back(value(inx), value(iny), value(inz));
      if (iw >= 0) cloud.weights.push_back(value(iw));
    }
  }
  try {
    cloud.validate();
  } catch (const Error& e) {
    throw ParseError(name, 0, e.what());
  }
  return cloud;
}

inline PointCloud read_ply(const fs::path& path) {
  auto in = detail::open_in(path);
  return parse_ply(in, path.string());
}

/// Writes a PLY whose vertex count is unknown up front. Vertices go to a side file that
/// is appended after the header on `close()`, so nothing is kept in memory.
class PlyStreamWriter {
 public:
  explicit PlyStreamWriter(fs::path path) : path_(std::move(path)), body_path_(path_.string() + ".body") {
    body_ = detail::open_out(body_path_, std::ios::out | std::ios::trunc);
  }
  ~PlyStreamWriter() {
    if (!closed_) {
      body_.close();
      std::error_code ec;
      fs::remove(body_path_, ec);
    }
  }
  PlyStreamWriter(const PlyStreamWriter&) = delete;
  PlyStreamWriter& operator=(const PlyStreamWriter&) = delete;

  void add(const Eigen::Vector3d& p) {
    body_ << detail::ply_vertex(p, nullptr, nullptr);
    ++count_;
  }
  std::size_t count() const noexcept { return count_; }

  /// Finalizes the file. A cloud without points is written with an empty vertex element.
  void close() {
    if (closed_) return;
    detail::finish_write(body_, body_path_);
    body_.close();
    {
      auto out = detail::open_out(path_, std::ios::out | std::ios::trunc);
      out << detail::ply_header(count_, false, false);
      auto in = detail::open_in(body_path_);
      out << in.rdbuf();
      detail::finish_write(out, path_);
    }
    std::error_code ec;
    fs::remove(body_path_, ec);
    closed_ = true;
  }

 private:
  fs::path path_;
  fs::path body_path_;
  std::ofstream body_;
  std::size_t count_ = 0;
  bool closed_ = false;
};

// ---------------------------------------------------------------------------
// RayMap tensors as .npy (float32, H x W x 6: origin xyz then direction xyz).

inline void write_raymap_npy(const RayMapTensor& raymap, const fs::path& path) {
  const auto data = raymap.to_channels();
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(raymap.height()) + ", " +
                       std::to_string(raymap.width()) + ", 6), }";
  const std::size_t prefix = 10;  // magic(6) + version(2) + header length(2)
  const std::size_t total = (prefix + header.size() + 1 + 63) / 64 * 64;
  header.append(total - prefix - header.size() - 1, ' ');
  header += '\n';
  auto out = detail::open_out(path, std::ios::out | std::ios::binary);
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xFF), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (float f : data) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    const char b[4] = {static_cast<char>(u & 0xFF), static_cast<char>((u >> 8) & 0xFF),
                       static_cast<char>((u >> 16) & 0xFF), static_cast<char>((u >> 24) & 0xFF)};
    out.write(b, 4);
  }
  detail::finish_write(out, path);
}

/// Reads a file written by `write_raymap_npy`; the origin is taken from the first pixel.
inline RayMapTensor read_raymap_npy(const fs::path& path) {
  auto in = detail::open_in(path, std::ios::in | std::ios::binary);
  char magic[10];
  if (!in.read(magic, 10) || std::memcmp(magic, "\x93NUMPY", 6) != 0 || magic[6] != 1) {
    throw ParseError(path.string(), 0, "not a version 1 .npy file");
  }
  const std::size_t hlen = static_cast<unsigned char>(magic[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(magic[9])) << 8);
  std::string header(hlen, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(hlen))) throw ParseError(path.string(), 0, "truncated header");
  if (header.find("'<f4'") == std::string::npos || header.find("'fortran_order': False") == std::string::npos) {
    throw ParseError(path.string(), 0, "expected little-endian float32 in C order");
  }
  const auto open = header.find("'shape': (");
  const auto close = header.find(')', open);
  if (open == std::string::npos || close == std::string::npos) throw ParseError(path.string(), 0, "missing shape");
  std::vector<long long> dims;
  std::stringstream ss(header.substr(open + 10, close - open - 10));
  for (std::string item; std::getline(ss, item, ',');) {
    const auto t = detail::split_ws(item);
    if (t.empty()) continue;
    const auto v = detail::parse_integer(t[0]);
    if (!v || *v <= 0) throw ParseError(path.string(), 0, "malformed shape");
    dims.push_back(*v);
  }
  if (dims.size() != 3 || dims[2] != 6) throw ParseError(path.string(), 0, "expected shape (H, W, 6)");
  const auto h = static_cast<int>(dims[0]), w = static_cast<int>(dims[1]);
  const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 6;
  std::vector<unsigned char> bytes(n * 4);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw ParseError(path.string(), 0, "truncated data");
  }
  auto at = [&](std::size_t i) {
    const std::uint32_t u = bytes[4 * i] | (bytes[4 * i + 1] << 8) | (bytes[4 * i + 2] << 16) |
                            (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    return static_cast<double>(f);
  };
  RayMapTensor out;
  out.directions = Grid<Eigen::Vector3d>(w, h);
  out.origin = Eigen::Vector3d(at(0), at(1), at(2));
  for (std::size_t p = 0; p < out.directions.size(); ++p) {
    out.directions[p] = Eigen::Vector3d(at(6 * p + 3), at(6 * p + 4), at(6 * p + 5));
  }
  return out;
}

}  // namespace raymap3r::io
