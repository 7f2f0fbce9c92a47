// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include "panorad/imgio.h"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace panorad::imgio {

namespace {

// Locale-independent float/double parsing.
double parse_double(const std::string& tok, const std::string& context) {
  double v = 0.0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw DataError(context + ": bad number '" + tok + "'");
  }
  if (!std::isfinite(v)) throw DataError(context + ": non-finite number '" + tok + "'");
  return v;
}

long parse_long(const std::string& tok, const std::string& context) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw DataError(context + ": bad integer '" + tok + "'");
  }
  return v;
}

// Reads one whitespace-delimited token from a binary stream.
std::string next_token(std::ifstream& in, const std::string& path) {
  std::string tok;
  int c = in.get();
  while (c != EOF && std::isspace(c)) c = in.get();
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (tok.empty()) throw DataError(path + ": truncated header");
  return tok;
}

uint32_t bswap32(uint32_t v) {
  return ((v & 0xFF000000u) >> 24) | ((v & 0x00FF0000u) >> 8) | ((v & 0x0000FF00u) << 8) |
         ((v & 0x000000FFu) << 24);
}

constexpr bool kHostLittle = std::endian::native == std::endian::little;

}  // namespace

Panorama Panorama::zeros(int w, int h) {
  Panorama p;
  p.width = w;
  p.height = h;
  p.data.assign(static_cast<size_t>(w) * h * 3, 0.0f);
  p.validate();
  return p;
}

void Panorama::validate() const {
  if (width <= 0 || height <= 0 || width % 2 != 0 || height != width / 2) {
    throw DataError("panorama dimensions " + std::to_string(width) + "x" +
                    std::to_string(height) + " are not 2:1 equirectangular");
  }
  if (data.size() != static_cast<size_t>(width) * height * 3) {
    throw DataError("panorama payload size mismatch");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw DataError("panorama contains a non-finite value");
    if (v < 0.0f) throw DataError("panorama contains a negative radiance value");
  }
}

Panorama Panorama::from_image(const Image& img) {
  Panorama p;
  p.width = img.width;
  p.height = img.height;
  p.data = img.data;
  p.validate();
  return p;
}

Image read_pfm_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  const std::string magic = next_token(in, path);
  if (magic != "PF") throw DataError(path + ": not a color PFM (magic '" + magic + "')");
  const long w = parse_long(next_token(in, path), path);
  const long h = parse_long(next_token(in, path), path);
  if (w <= 0 || h <= 0 || w > 1 << 20 || h > 1 << 20) {
    throw DataError(path + ": unreasonable dimensions");
  }
  // next_token consumed the single whitespace byte that terminates the scale
  // line, so the stream already sits on the payload.
  const double scale = parse_double(next_token(in, path), path);
  if (scale == 0.0) throw DataError(path + ": zero scale");

  Image img = Image::zeros(static_cast<int>(w), static_cast<int>(h));
  const size_t row_floats = static_cast<size_t>(w) * 3;
  std::vector<uint32_t> row(row_floats);
  const bool file_little = scale < 0.0;
  for (long y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), row_floats * 4);
    if (in.gcount() != static_cast<std::streamsize>(row_floats * 4)) {
      throw DataError(path + ": truncated payload");
    }
    float* dst = img.pixel(0, static_cast<int>(y));
    for (size_t i = 0; i < row_floats; ++i) {
      uint32_t bits = row[i];
      if (file_little != kHostLittle) bits = bswap32(bits);
      float v;
      std::memcpy(&v, &bits, 4);
      if (std::isnan(v)) throw DataError(path + ": NaN in payload");
      dst[i] = v;
    }
  }
  return img;
}

void write_pfm_image(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  char header[64];
  std::snprintf(header, sizeof(header), "PF\n%d %d\n-1.0\n", img.width, img.height);
  out.write(header, static_cast<std::streamsize>(std::strlen(header)));
  const size_t row_floats = static_cast<size_t>(img.width) * 3;
  std::vector<uint32_t> row(row_floats);
  for (int y = img.height - 1; y >= 0; --y) {
    const float* src = img.pixel(0, y);
    for (size_t i = 0; i < row_floats; ++i) {
      uint32_t bits;
      std::memcpy(&bits, &src[i], 4);
      if (!kHostLittle) bits = bswap32(bits);
      row[i] = bits;
    }
    out.write(reinterpret_cast<const char*>(row.data()), row_floats * 4);
  }
  if (!out) throw DataError(path + ": write failed");
}

Panorama read_pfm(const std::string& path) {
  const Image img = read_pfm_image(path);
  try {
    return Panorama::from_image(img);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_pfm(const Panorama& pano, const std::string& path) {
  pano.validate();
  write_pfm_image(pano.to_image(), path);
}

Mask read_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  const std::string magic = next_token(in, path);
  if (magic != "P5") throw DataError(path + ": not a binary PGM");
  const long w = parse_long(next_token(in, path), path);
  const long h = parse_long(next_token(in, path), path);
  const long maxval = parse_long(next_token(in, path), path);
  if (maxval != 255) throw DataError(path + ": maxval must be 255");
  Mask mask;
  mask.width = static_cast<int>(w);
  mask.height = static_cast<int>(h);
  mask.excluded.resize(static_cast<size_t>(w) * h);
  std::vector<uint8_t> raw(mask.excluded.size());
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw DataError(path + ": truncated payload");
  }
  for (size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == 0) {
      mask.excluded[i] = 0;
    } else if (raw[i] == 255) {
      mask.excluded[i] = 1;
    } else {
      throw DataError(path + ": non-binary mask value " + std::to_string(int(raw[i])));
    }
  }
  return mask;
}

void write_mask(const Mask& mask, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  char header[64];
  std::snprintf(header, sizeof(header), "P5\n%d %d\n255\n", mask.width, mask.height);
  out.write(header, static_cast<std::streamsize>(std::strlen(header)));
  std::vector<uint8_t> raw(mask.excluded.size());
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = mask.excluded[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError(path + ": write failed");
}

std::vector<Pose> read_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::vector<Pose> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    std::vector<std::string> tok;
    std::string t;
    while (ss >> t) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string ctx = path + ":" + std::to_string(line_no);
    if (tok.size() != 8) {
      throw DataError(ctx + ": expected `id tx ty tz qw qx qy qz`, got " +
                      std::to_string(tok.size()) + " fields");
    }
    Pose pose;
    pose.frame_id = tok[0];
    pose.position = Vec3(parse_double(tok[1], ctx), parse_double(tok[2], ctx),
                         parse_double(tok[3], ctx));
    const double qw = parse_double(tok[4], ctx);
    const double qx = parse_double(tok[5], ctx);
    const double qy = parse_double(tok[6], ctx);
    const double qz = parse_double(tok[7], ctx);
    const double norm = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
    if (std::abs(norm - 1.0) > 1e-3) {
      throw DataError(ctx + ": quaternion not unit (norm " + std::to_string(norm) + ")");
    }
    pose.orientation = Quat(qw / norm, qx / norm, qy / norm, qz / norm);
    poses.push_back(std::move(pose));
  }
  return poses;
}

void write_poses(const std::vector<Pose>& poses, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  char line[256];
  for (const Pose& p : poses) {
    std::snprintf(line, sizeof(line), "%s %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  p.frame_id.c_str(), p.position.x(), p.position.y(), p.position.z(),
                  p.orientation.w(), p.orientation.x(), p.orientation.y(), p.orientation.z());
    out << line;
  }
  if (!out) throw DataError(path + ": write failed");
}

const Pose& DatasetManifest::pose_for(const std::string& id) const {
  for (const Pose& p : poses) {
    if (p.frame_id == id) return p;
  }
  throw DataError("pose id '" + id + "' not found in " + pose_file);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  DatasetManifest m;
  m.base_dir = std::filesystem::path(path).parent_path();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind)) continue;
    const std::string ctx = path + ":" + std::to_string(line_no);
    if (kind == "scale") {
      std::string v;
      if (!(ss >> v)) throw DataError(ctx + ": scale needs a value");
      m.scene_scale = parse_double(v, ctx);
      if (m.scene_scale <= 0.0) throw DataError(ctx + ": scale must be positive");
    } else if (kind == "poses") {
      if (!(ss >> m.pose_file)) throw DataError(ctx + ": poses needs a path");
      const std::string full = m.resolve(m.pose_file);
      if (!std::filesystem::exists(full)) throw DataError(ctx + ": missing pose file " + full);
      m.poses = read_poses(full);
    } else if (kind == "view") {
      ViewEntry v;
      if (!(ss >> v.pano_path >> v.pose_id)) {
        throw DataError(ctx + ": view needs `pano_path pose_id [mask_path]`");
      }
      ss >> v.mask_path;  // optional
      std::string extra;
      if (ss >> extra) throw DataError(ctx + ": trailing field '" + extra + "'");
      m.views.push_back(std::move(v));
    } else {
      throw DataError(ctx + ": unknown record '" + kind + "'");
    }
  }
  // Validate referenced files and pose ids.
  for (const ViewEntry& v : m.views) {
    const std::string pano_full = m.resolve(v.pano_path);
    if (!std::filesystem::exists(pano_full)) {
      throw DataError(path + ": missing panorama " + pano_full);
    }
    m.pose_for(v.pose_id);
    if (!v.mask_path.empty()) {
      const std::string mask_full = m.resolve(v.mask_path);
      if (!std::filesystem::exists(mask_full)) {
        throw DataError(path + ": missing mask " + mask_full);
      }
    }
  }
  return m;
}

Panorama downsample(const Panorama& pano, int factor) {
  if (factor <= 0 || pano.width % factor != 0 || pano.height % factor != 0) {
    throw DataError("downsample factor must divide both dimensions");
  }
  if (factor == 1) return pano;
  Panorama out = Panorama::zeros(pano.width / factor, pano.height / factor);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double acc[3] = {0, 0, 0};
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) {
          const float* p = pano.pixel(x * factor + dx, y * factor + dy);
          acc[0] += p[0];
          acc[1] += p[1];
          acc[2] += p[2];
        }
      }
      float* q = out.pixel(x, y);
      q[0] = static_cast<float>(acc[0] * inv);
      q[1] = static_cast<float>(acc[1] * inv);
      q[2] = static_cast<float>(acc[2] * inv);
    }
  }
  return out;
}

}  // namespace panorad::imgio
