// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbv/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace nbv {

void FrameStack::push(GrayFrame frame) {
  frames_.push_back(std::move(frame));
  while (frames_.size() > static_cast<std::size_t>(preceding_) + 1) frames_.pop_front();
}

Vec3 pixel_direction(const Frame& frame, const CameraIntrinsics& intr, int row, int col) {
  const double f = intr.focal();
  const double left = 0.5 * intr.width - (col + 0.5);
  const double up = 0.5 * intr.height - (row + 0.5);
  return frame.rotation * Vec3(f, left, up).normalized();
}

std::vector<Ray> camera_rays(const Pose5D& pose, const CameraIntrinsics& intr) {
  intr.validate();
  const Frame frame = pose_to_frame(pose);
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(intr.width) * intr.height);
  for (int r = 0; r < intr.height; ++r) {
    for (int c = 0; c < intr.width; ++c) {
      rays.push_back({frame.translation, pixel_direction(frame, intr, r, c)});
    }
  }
  return rays;
}

float shade(const Vec3& normal, const Lighting& light) {
  const double lambert = std::max(0.0, normal.dot(-light.direction));
  return static_cast<float>(std::clamp(light.ambient + (1.0 - light.ambient) * lambert, 0.0, 1.0));
}

RenderedView render_view(const Bvh& bvh, const Pose5D& pose, const CameraIntrinsics& intr,
                         const Lighting& light) {
  intr.validate();
  const Frame frame = pose_to_frame(pose);
  const std::size_t n = static_cast<std::size_t>(intr.width) * intr.height;
  RenderedView view;
  view.depth = {intr.width, intr.height, std::vector<double>(n, kNoHit), pose, intr};
  view.gray = {intr.width, intr.height, std::vector<float>(n, 0.0f), pose};
  for (int r = 0; r < intr.height; ++r) {
    for (int c = 0; c < intr.width; ++c) {
      const Ray ray{frame.translation, pixel_direction(frame, intr, r, c)};
      const auto hit = bvh.intersect(ray, intr.max_range);
      if (!hit) continue;
      const std::size_t i = static_cast<std::size_t>(r) * intr.width + c;
      view.depth.depths[i] = hit->distance;
      view.gray.intensities[i] = shade(hit->normal, light);
    }
  }
  return view;
}

DepthMap render_depth(const Bvh& bvh, const Pose5D& pose, const CameraIntrinsics& intr) {
  return render_view(bvh, pose, intr).depth;
}

GrayFrame render_gray(const Bvh& bvh, const Pose5D& pose, const CameraIntrinsics& intr,
                      const Lighting& light) {
  return render_view(bvh, pose, intr, light).gray;
}

void write_depth_pgm(const DepthMap& depth, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << depth.width << ' ' << depth.height << "\n65535\n";
  for (double d : depth.depths) {
    const double mm = std::isfinite(d) ? std::clamp(std::round(d * 1000.0), 0.0, 65535.0) : 0.0;
    const auto v = static_cast<std::uint16_t>(mm);
    // PGM samples are big-endian.
    out.put(static_cast<char>(v >> 8));
    out.put(static_cast<char>(v & 0xff));
  }
}

void write_gray_pgm(const GrayFrame& gray, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << gray.width << ' ' << gray.height << "\n255\n";
  for (float v : gray.intensities) {
    out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f))));
  }
}

}  // namespace nbv
