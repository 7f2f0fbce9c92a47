// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "panorad/imgio.h"

using namespace panorad;
using namespace panorad::imgio;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "panorad_imgio_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("pfm: zero panorama round trip") {
  const auto dir = temp_dir();
  const std::string path = (dir / "zeros.pfm").string();
  Panorama p = Panorama::zeros(2, 1);
  write_pfm(p, path);

  // Header then six zero floats.
  const std::string bytes = slurp(path);
  const std::string header = "PF\n2 1\n-1.0\n";
  REQUIRE(bytes.size() == header.size() + 6 * 4);
  CHECK(bytes.compare(0, header.size(), header) == 0);
  for (size_t i = header.size(); i < bytes.size(); ++i) CHECK(bytes[i] == 0);

  const Panorama back = read_pfm(path);
  CHECK(back.width == 2);
  CHECK(back.height == 1);
  CHECK(back.data == p.data);
}

TEST_CASE("pfm: byte-exact round trip for arbitrary payloads") {
  const auto dir = temp_dir();
  const std::string path = (dir / "rt.pfm").string();
  Panorama p = Panorama::zeros(8, 4);
  CounterRng rng(11);
  for (float& v : p.data) v = static_cast<float>(rng.uniform(0.0, 1e4));
  write_pfm(p, path);
  const std::string first = slurp(path);
  const Panorama back = read_pfm(path);
  for (size_t i = 0; i < p.data.size(); ++i) {
    REQUIRE(std::memcmp(&back.data[i], &p.data[i], 4) == 0);
  }
  write_pfm(back, path);
  CHECK(slurp(path) == first);
}

TEST_CASE("pfm: value 1.0 encodes as IEEE-754 3F80 0000 little-endian") {
  const auto dir = temp_dir();
  const std::string path = (dir / "one.pfm").string();
  Panorama p = Panorama::zeros(2, 1);
  for (float& v : p.data) v = 1.0f;
  write_pfm(p, path);
  const std::string bytes = slurp(path);
  const size_t off = std::strlen("PF\n2 1\n-1.0\n");
  const unsigned char expect[4] = {0x00, 0x00, 0x80, 0x3F};
  for (int ch = 0; ch < 6; ++ch) {
    CHECK(std::memcmp(bytes.data() + off + 4 * ch, expect, 4) == 0);
  }
}

TEST_CASE("pfm: big-endian file decodes to the same values") {
  const auto dir = temp_dir();
  const std::string le = (dir / "le.pfm").string();
  const std::string be = (dir / "be.pfm").string();
  // One raster, both encodings: 2x1, all channels 1.0.
  {
    std::ofstream out(le, std::ios::binary);
    out << "PF\n2 1\n-1.0\n";
    const unsigned char px[4] = {0x00, 0x00, 0x80, 0x3F};
    for (int i = 0; i < 6; ++i) out.write(reinterpret_cast<const char*>(px), 4);
  }
  {
    std::ofstream out(be, std::ios::binary);
    out << "PF\n2 1\n1.0\n";
    const unsigned char px[4] = {0x3F, 0x80, 0x00, 0x00};
    for (int i = 0; i < 6; ++i) out.write(reinterpret_cast<const char*>(px), 4);
  }
  const Panorama a = read_pfm(le);
  const Panorama b = read_pfm(be);
  CHECK(a.data == b.data);
  for (float v : a.data) CHECK(v == 1.0f);
}

TEST_CASE("pfm: rejects malformed inputs") {
  const auto dir = temp_dir();
  const std::string path = (dir / "bad.pfm").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "Pf\n2 1\n-1.0\n";  // grayscale magic
  }
  CHECK_THROWS_AS(read_pfm(path), DataError);

  {
    // 3x1 is not 2:1.
    std::ofstream out(path, std::ios::binary);
    out << "PF\n3 1\n-1.0\n";
    const char zeros[4 * 9] = {};
    out.write(zeros, sizeof(zeros));
  }
  CHECK_THROWS_AS(read_pfm(path), DataError);

  {
    // NaN payload.
    std::ofstream out(path, std::ios::binary);
    out << "PF\n2 1\n-1.0\n";
    const unsigned char nan_px[4] = {0x00, 0x00, 0xC0, 0x7F};
    for (int i = 0; i < 6; ++i) out.write(reinterpret_cast<const char*>(nan_px), 4);
  }
  CHECK_THROWS_AS(read_pfm(path), DataError);

  {
    // Negative radiance.
    std::ofstream out(path, std::ios::binary);
    out << "PF\n2 1\n-1.0\n";
    const float v = -1.0f;
    for (int i = 0; i < 6; ++i) out.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_AS(read_pfm(path), DataError);
}

TEST_CASE("mask: round trips and rejects non-binary payloads") {
  const auto dir = temp_dir();
  const std::string path = (dir / "mask.pgm").string();

  Mask all_keep = Mask::none(4, 2);
  write_mask(all_keep, path);
  Mask back = read_mask(path);
  for (uint8_t e : back.excluded) CHECK(e == 0);

  // Checkerboard 4x2 written by hand.
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n4 2\n255\n";
    const unsigned char bytes[8] = {0, 255, 0, 255, 255, 0, 255, 0};
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  back = read_mask(path);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 4; ++x) {
      CHECK(back.is_excluded(x, y) == ((x + y) % 2 == 1));
    }
  }

  Mask all_drop = Mask::none(4, 2);
  std::fill(all_drop.excluded.begin(), all_drop.excluded.end(), 1);
  write_mask(all_drop, path);
  back = read_mask(path);
  for (uint8_t e : back.excluded) CHECK(e == 1);

  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n2 1\n255\n";
    const unsigned char bytes[2] = {0, 128};
    out.write(reinterpret_cast<const char*>(bytes), 2);
  }
  CHECK_THROWS_AS(read_mask(path), DataError);
}

TEST_CASE("poses: parses, renormalizes, rejects") {
  const auto dir = temp_dir();
  const std::string path = (dir / "poses.txt").string();
  {
    std::ofstream out(path);
    out << "f0 0 0 0 1 0 0 0\n";
    out << "f1 0.5 0 0 1 0 0 0\n";
  }
  const auto poses = read_poses(path);
  REQUIRE(poses.size() == 2);
  CHECK(poses[0].frame_id == "f0");
  CHECK(poses[0].position.norm() == 0.0);
  CHECK(poses[0].orientation.w() == doctest::Approx(1.0));
  CHECK(poses[1].position.x() == doctest::Approx(0.5));

  {
    std::ofstream out(path);
    out << "f0 0 0 0 2 0 0 0\n";  // norm 2
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(read_poses(path)),
                       doctest::Contains("quaternion not unit"), DataError);

  {
    std::ofstream out(path);
    out << "f0 0 0 0 1 0 0\n";  // 7 fields
  }
  CHECK_THROWS_AS(static_cast<void>(read_poses(path)), DataError);

  {
    std::ofstream out(path);
    out << "f0 0 nan 0 1 0 0 0\n";
  }
  CHECK_THROWS_AS(static_cast<void>(read_poses(path)), DataError);
}

TEST_CASE("poses: write/read round trip preserves values") {
  const auto dir = temp_dir();
  const std::string path = (dir / "poses_rt.txt").string();
  std::vector<Pose> poses(1);
  poses[0].frame_id = "a";
  poses[0].position = Vec3(0.125, -0.25, 0.0625);
  poses[0].orientation = Quat(Eigen::AngleAxisd(0.7, Vec3::UnitY()));
  write_poses(poses, path);
  const auto back = read_poses(path);
  REQUIRE(back.size() == 1);
  CHECK((back[0].position - poses[0].position).norm() == 0.0);
  CHECK(std::abs(back[0].orientation.dot(poses[0].orientation)) == doctest::Approx(1.0));
}

TEST_CASE("manifest: empty, minimal, and dangling-path cases") {
  const auto dir = temp_dir();
  const std::string mpath = (dir / "manifest").string();

  {  // empty manifest is a valid empty dataset
    std::ofstream out(mpath);
    out << "# nothing\n";
  }
  const DatasetManifest empty = read_manifest(mpath);
  CHECK(empty.views.empty());
  CHECK(empty.scene_scale == 1.0);

  {  // one pano + one pose
    std::ofstream poses(dir / "p.txt");
    poses << "f0 0 0 0 1 0 0 0\n";
    write_pfm(Panorama::zeros(2, 1), (dir / "a.pfm").string());
    std::ofstream out(mpath);
    out << "scale 2.0\nposes p.txt\nview a.pfm f0\n";
  }
  const DatasetManifest m = read_manifest(mpath);
  REQUIRE(m.views.size() == 1);
  CHECK(m.scene_scale == 2.0);
  CHECK(m.pose_for("f0").frame_id == "f0");

  {  // dangling mask path rejected, naming the path
    std::ofstream out(mpath);
    out << "poses p.txt\nview a.pfm f0 missing_mask.pgm\n";
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(read_manifest(mpath)),
                       doctest::Contains("missing_mask.pgm"), DataError);

  {  // unknown pose id rejected
    std::ofstream out(mpath);
    out << "poses p.txt\nview a.pfm f9\n";
  }
  CHECK_THROWS_AS(static_cast<void>(read_manifest(mpath)), DataError);
}

TEST_CASE("downsample: box filter averages blocks") {
  Panorama p = Panorama::zeros(4, 2);
  for (int i = 0; i < 4 * 2 * 3; ++i) p.data[i] = static_cast<float>(i);
  const Panorama d = downsample(p, 2);
  CHECK(d.width == 2);
  CHECK(d.height == 1);
  // Top-left block pixels: (0,0) and (1,0) and (0,1) and (1,1).
  const float expect = (p.pixel(0, 0)[0] + p.pixel(1, 0)[0] + p.pixel(0, 1)[0] +
                        p.pixel(1, 1)[0]) / 4.0f;
  CHECK(d.pixel(0, 0)[0] == doctest::Approx(expect));
}
