// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef PANORAD_IMGIO_H
#define PANORAD_IMGIO_H

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "panorad/common.h"

namespace panorad::imgio {

/// Generic RGB float raster, row-major, top row first.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // height*width*3

  static Image zeros(int w, int h) {
    Image img;
    img.width = w;
    img.height = h;
    img.data.assign(static_cast<size_t>(w) * h * 3, 0.0f);
    return img;
  }
  float* pixel(int x, int y) { return data.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const float* pixel(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  size_t count() const { return data.size(); }
};

/// Equirectangular radiance raster. Invariants: height = width/2, all values
/// finite and nonnegative.
struct Panorama {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // height*width*3, linear radiance

  static Panorama zeros(int w, int h);
  float* pixel(int x, int y) { return data.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const float* pixel(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  void validate() const;  // throws DataError on any invariant violation
  Image to_image() const { return Image{width, height, data}; }
  static Panorama from_image(const Image& img);
};

/// Loss-exclusion mask. excluded[y*w+x] != 0 means the pixel is ignored.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> excluded;

  static Mask none(int w, int h) { return Mask{w, h, std::vector<uint8_t>(size_t(w) * h, 0)}; }
  bool is_excluded(int x, int y) const { return excluded[static_cast<size_t>(y) * width + x] != 0; }
};

struct Pose {
  std::string frame_id;
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();  // camera-to-world
};

// PFM: "PF\n{W} {H}\n{scale}\n" + raw float32 triplets, bottom row first.
// Negative scale marks little-endian payloads.
Image read_pfm_image(const std::string& path);
void write_pfm_image(const Image& img, const std::string& path);
Panorama read_pfm(const std::string& path);
void write_pfm(const Panorama& pano, const std::string& path);

// Binary PGM (P5, maxval 255): 0 = keep, 255 = exclude.
Mask read_mask(const std::string& path);
void write_mask(const Mask& mask, const std::string& path);

// One pose per line: `id tx ty tz qw qx qy qz`. Quaternions within 1e-3 of
// unit norm are renormalized; anything further off is rejected.
std::vector<Pose> read_poses(const std::string& path);
void write_poses(const std::vector<Pose>& poses, const std::string& path);

struct ViewEntry {
  std::string pano_path;
  std::string pose_id;
  std::string mask_path;  // empty = unmasked
};

struct DatasetManifest {
  double scene_scale = 1.0;  // divide positions by this to land in the unit sphere
  std::string pose_file;
  std::vector<Pose> poses;
  std::vector<ViewEntry> views;
  std::filesystem::path base_dir;  // view/mask paths resolve against this

  const Pose& pose_for(const std::string& id) const;
  std::string resolve(const std::string& rel) const {
    return (base_dir / rel).string();
  }
};

// Manifest grammar (one record per line, `#` comments):
//   scale <s>
//   poses <path>
//   view <pano_path> <pose_id> [mask_path]
DatasetManifest read_manifest(const std::string& path);

/// Box-filter downsample by an integer factor (both dims divisible).
Panorama downsample(const Panorama& pano, int factor);

}  // namespace panorad::imgio

#endif  // PANORAD_IMGIO_H
