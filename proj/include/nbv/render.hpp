// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pinhole ray generation, depth (Euclidean range) rendering and Lambertian
// grayscale shading by BVH ray casting.

#ifndef NBV_RENDER_HPP_
#define NBV_RENDER_HPP_

#include <deque>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "nbv/bvh.hpp"
#include "nbv/geometry.hpp"

namespace nbv {

/// Depth value stored for pixels with no hit within max_range.
inline constexpr double kNoHit = std::numeric_limits<double>::infinity();

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depths;  // row-major, row 0 at the top
  Pose5D pose;
  CameraIntrinsics intrinsics;

  double at(int row, int col) const { return depths[static_cast<std::size_t>(row) * width + col]; }
};

struct GrayFrame {
  int width = 0;
  int height = 0;
  std::vector<float> intensities;  // row-major, in [0, 1]
  Pose5D pose;

  float at(int row, int col) const {
    return intensities[static_cast<std::size_t>(row) * width + col];
  }
};

/// The current frame plus up to K preceding ones, oldest first.
class FrameStack {
 public:
  explicit FrameStack(int preceding = 4) : preceding_(preceding) {}
  void push(GrayFrame frame);
  void clear() { frames_.clear(); }
  int preceding() const { return preceding_; }
  std::size_t size() const { return frames_.size(); }
  const std::deque<GrayFrame>& frames() const { return frames_; }

 private:
  int preceding_;
  std::deque<GrayFrame> frames_;
};

struct Lighting {
  Vec3 direction{Vec3(-1.0, -1.0, -2.0).normalized()};  // direction light travels
  double ambient = 0.2;
};

/// World-space unit direction through the center of pixel (row, col).
Vec3 pixel_direction(const Frame& frame, const CameraIntrinsics& intr, int row, int col);

/// One ray per pixel center, row-major.
std::vector<Ray> camera_rays(const Pose5D& pose, const CameraIntrinsics& intr);

DepthMap render_depth(const Bvh& bvh, const Pose5D& pose, const CameraIntrinsics& intr);

GrayFrame render_gray(const Bvh& bvh, const Pose5D& pose, const CameraIntrinsics& intr,
                      const Lighting& light = {});

/// Lambert shade for a surface normal that faces the camera.
float shade(const Vec3& normal, const Lighting& light);

struct RenderedView {
  DepthMap depth;
  GrayFrame gray;
};

/// Depth and gray from a single pass over the pixels.
RenderedView render_view(const Bvh& bvh, const Pose5D& pose, const CameraIntrinsics& intr,
                         const Lighting& light = {});

/// 16-bit binary PGM, millimeter quantization; no-hit pixels are written as 0.
void write_depth_pgm(const DepthMap& depth, const std::filesystem::path& path);
/// 8-bit binary PGM.
void write_gray_pgm(const GrayFrame& gray, const std::filesystem::path& path);

}  // namespace nbv

#endif  // NBV_RENDER_HPP_
