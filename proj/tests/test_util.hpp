#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <filesystem>
#include <random>
#include <string>

#include "raymap3r/geom.hpp"

namespace testutil {

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Eigen::Vector3d random_vector(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

inline raymap3r::RigidPose random_pose(std::mt19937_64& rng, double max_t = 5.0) {
  raymap3r::RigidPose p;
  p.rotation = random_rotation(rng);
  p.translation = random_vector(rng, -max_t, max_t);
  return p;
}

inline raymap3r::SimTransform random_sim(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> s(0.5, 2.0);
  raymap3r::SimTransform g;
  g.scale = s(rng);
  g.rotation = random_rotation(rng);
  g.translation = random_vector(rng, -5.0, 5.0);
  return g;
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

/// Fresh directory under the system temp dir, removed when the holder dies.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "test") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("raymap3r_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
