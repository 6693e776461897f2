#pragma once

// File formats: the DPM binary container for dense prediction maps, point
// model text files, and pose record files.

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dpa/dense_map.hpp"
#include "dpa/error.hpp"
#include "dpa/point_model.hpp"
#include "dpa/pose.hpp"

namespace dpa::io {

inline constexpr std::array<char, 4> kDpmMagic{'D', 'P', 'M', '1'};
inline constexpr std::uint32_t kDpmVersion = 1;
inline constexpr std::size_t kDpmHeaderSize = 52;

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  if (size < 0) throw Error(ErrorCode::Io, "cannot size " + path.string());
  in.seekg(0, std::ios::beg);
  std::vector<char> bytes(static_cast<std::size_t>(size));
  in.read(bytes.data(), size);
  if (!in) throw Error(ErrorCode::Io, "read failed: " + path.string());
  return bytes;
}

/// Writes through a temporary sibling and renames, so a failed write never
/// leaves a partial file at `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::Io, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot rename onto " + path.string());
  }
}

namespace detail {
template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}
}  // namespace detail

/// Serializes a map in the DPM layout:
///   magic "DPM1", u32 version, u32 width, u32 height, u32 classes,
///   f64 fx, fy, cx, cy, then (classes + 7) row-major f32 planes.
/// All fields little-endian.
inline std::string encode_dpm(const DensePredictionMap& map) {
  const auto& k = map.intrinsics();
  for (double v : {k.fx, k.fy, k.cx, k.cy})
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "non-finite camera intrinsics");
  std::string out;
  out.reserve(kDpmHeaderSize + 4 * map.data().size());
  out.append(kDpmMagic.data(), kDpmMagic.size());
  detail::put_le<std::uint32_t>(out, kDpmVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.width()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.height()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.num_classes()));
  for (double v : {k.fx, k.fy, k.cx, k.cy}) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  for (float v : map.data()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "non-finite value in prediction map");
    detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline DensePredictionMap decode_dpm(std::string_view bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::TruncatedPayload, "file shorter than the magic");
  if (std::memcmp(bytes.data(), kDpmMagic.data(), 4) != 0) throw Error(ErrorCode::BadMagic, "not a DPM file");
  if (bytes.size() < 8) throw Error(ErrorCode::TruncatedPayload, "truncated header");
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kDpmVersion) throw Error(ErrorCode::VersionUnsupported, "DPM version " + std::to_string(version));
  if (bytes.size() < kDpmHeaderSize) throw Error(ErrorCode::TruncatedPayload, "truncated header");
  const auto width = detail::get_le<std::uint32_t>(bytes.data() + 8);
  const auto height = detail::get_le<std::uint32_t>(bytes.data() + 12);
  const auto classes = detail::get_le<std::uint32_t>(bytes.data() + 16);
  std::array<double, 4> intr{};
  for (int i = 0; i < 4; ++i) {
    intr[static_cast<std::size_t>(i)] = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes.data() + 20 + 8 * i));
    if (!std::isfinite(intr[static_cast<std::size_t>(i)]))
      throw Error(ErrorCode::NonFiniteValue, "non-finite camera intrinsics");
  }
  if (width == 0 || height == 0 || classes == 0 || width > (1u << 16) || height > (1u << 16) || classes > (1u << 16))
    throw Error(ErrorCode::ParseError, "implausible DPM dimensions");
  const std::uint64_t floats = std::uint64_t{width} * height * (std::uint64_t{classes} + DensePredictionMap::kFixedPlanes);
  const std::uint64_t expected = kDpmHeaderSize + 4 * floats;
  if (bytes.size() < expected) throw Error(ErrorCode::TruncatedPayload, "payload shorter than declared dimensions");
  if (bytes.size() > expected) throw Error(ErrorCode::TrailingBytes, "data after the declared payload");

  CameraIntrinsics k{intr[0], intr[1], intr[2], intr[3], static_cast<int>(width), static_cast<int>(height)};
  DensePredictionMap map(static_cast<int>(width), static_cast<int>(height), static_cast<int>(classes), k);
  auto data = map.data();
  const char* p = bytes.data() + kDpmHeaderSize;
  for (std::size_t i = 0; i < data.size(); ++i, p += 4) {
    const float v = std::bit_cast<float>(detail::get_le<std::uint32_t>(p));
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "non-finite value at float " + std::to_string(i));
    data[i] = v;
  }
  return map;
}

inline void write_dpm(const DensePredictionMap& map, const std::filesystem::path& path) {
  write_file_atomic(path, encode_dpm(map));
}

inline DensePredictionMap read_dpm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_dpm({bytes.data(), bytes.size()});
}

namespace detail {
inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_value(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
}

inline std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

template <typename F>
void for_each_line(std::string_view text, F&& f) {
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    ++line_no;
    if (!(nl == std::string_view::npos && line.empty())) f(line_no, line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
}
}  // namespace detail

/// Point model text format:
///   # name=<text> sym=<0|1>
///   x y z
///   ...
/// Blank lines and other '#' comments are ignored.
inline PointModel parse_point_model(std::string_view text) {
  PointModel model;
  bool seen_header = false;
  detail::for_each_line(text, [&](int line_no, std::string_view raw) {
    const auto line = detail::trim(raw);
    if (line.empty()) return;
    if (line.front() == '#') {
      if (seen_header) return;
      bool any = false;
      for (auto tok : detail::tokens(line.substr(1))) {
        if (tok.starts_with("name=")) {
          model.name = std::string(tok.substr(5));
          any = true;
        } else if (tok.starts_with("sym=")) {
          const auto v = tok.substr(4);
          if (v != "0" && v != "1") throw Error(ErrorCode::ParseError, "sym must be 0 or 1", line_no);
          model.symmetric = v == "1";
          any = true;
        }
      }
      seen_header = any;
      return;
    }
    const auto toks = detail::tokens(line);
    Vec3 p;
    if (toks.size() != 3 || !detail::parse_value(toks[0], p.x) || !detail::parse_value(toks[1], p.y) ||
        !detail::parse_value(toks[2], p.z) || !is_finite(p))
      throw Error(ErrorCode::ParseError, "expected three finite numbers 'x y z'", line_no);
    model.points.push_back(p);
  });
  if (model.points.empty()) throw Error(ErrorCode::EmptyModel, "point model has no points");
  return model;
}

inline std::string format_point_model(const PointModel& model) {
  std::string name = model.name.empty() ? "model" : model.name;
  for (char& c : name)
    if (c == ' ' || c == '\t' || c == '\n') c = '_';
  std::string out = "# name=" + name + " sym=" + (model.symmetric ? "1" : "0") + "\n";
  for (const auto& p : model.points)
    out += detail::shortest(p.x) + " " + detail::shortest(p.y) + " " + detail::shortest(p.z) + "\n";
  return out;
}

inline PointModel read_point_model(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_point_model({bytes.data(), bytes.size()});
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message(), e.line());
  }
}

inline void write_point_model(const PointModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, format_point_model(model));
}

/// Pose records, one per line, fields in any order:
///   scene=<id> class=<id> q=<w,x,y,z> t=<x,y,z> conf=<c>
inline std::vector<PoseRecord> parse_poses(std::string_view text) {
  std::vector<PoseRecord> out;
  detail::for_each_line(text, [&](int line_no, std::string_view raw) {
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') return;
    PoseRecord rec;
    unsigned seen = 0;
    auto fail = [&](const std::string& why) { return Error(ErrorCode::ParseError, why, line_no); };
    for (auto tok : detail::tokens(line)) {
      const auto eq = tok.find('=');
      if (eq == std::string_view::npos) throw fail("expected key=value, got '" + std::string(tok) + "'");
      const auto key = tok.substr(0, eq);
      const auto val = tok.substr(eq + 1);
      unsigned bit;
      bool ok;
      if (key == "scene") {
        bit = 1;
        ok = detail::parse_value(val, rec.scene_id);
      } else if (key == "class") {
        bit = 2;
        ok = detail::parse_value(val, rec.pose.class_id);
      } else if (key == "q") {
        bit = 4;
        const auto parts = detail::split(val, ',');
        ok = parts.size() == 4 && detail::parse_value(parts[0], rec.pose.q.w) &&
             detail::parse_value(parts[1], rec.pose.q.x) && detail::parse_value(parts[2], rec.pose.q.y) &&
             detail::parse_value(parts[3], rec.pose.q.z) && is_finite(rec.pose.q);
      } else if (key == "t") {
        bit = 8;
        const auto parts = detail::split(val, ',');
        ok = parts.size() == 3 && detail::parse_value(parts[0], rec.pose.t.x) &&
             detail::parse_value(parts[1], rec.pose.t.y) && detail::parse_value(parts[2], rec.pose.t.z) &&
             is_finite(rec.pose.t);
      } else if (key == "conf") {
        bit = 16;
        ok = detail::parse_value(val, rec.pose.confidence) && std::isfinite(rec.pose.confidence);
      } else {
        throw fail("unknown field '" + std::string(key) + "'");
      }
      if (seen & bit) throw fail("duplicate field '" + std::string(key) + "'");
      if (!ok) throw fail("malformed value for '" + std::string(key) + "'");
      seen |= bit;
    }
    static constexpr std::array<const char*, 5> names{"scene", "class", "q", "t", "conf"};
    for (unsigned i = 0; i < names.size(); ++i)
      if (!(seen & (1u << i))) throw fail(std::string("missing field '") + names[i] + "='");
    out.push_back(rec);
  });
  return out;
}

inline std::string format_pose(const PoseRecord& r) {
  using detail::shortest;
  const auto& p = r.pose;
  return "scene=" + std::to_string(r.scene_id) + " class=" + std::to_string(p.class_id) + " q=" + shortest(p.q.w) +
         "," + shortest(p.q.x) + "," + shortest(p.q.y) + "," + shortest(p.q.z) + " t=" + shortest(p.t.x) + "," +
         shortest(p.t.y) + "," + shortest(p.t.z) + " conf=" + shortest(p.confidence);
}

inline std::string format_poses(std::span<const PoseRecord> records) {
  std::string out;
  for (const auto& r : records) out += format_pose(r) + "\n";
  return out;
}

inline std::vector<PoseRecord> read_poses(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_poses({bytes.data(), bytes.size()});
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message(), e.line());
  }
}

inline void write_poses(std::span<const PoseRecord> records, const std::filesystem::path& path) {
  write_file_atomic(path, format_poses(records));
}

}  // namespace dpa::io
