#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lamina {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

using Face = std::array<int, 3>;
using Tet = std::array<int, 4>;

/// Base class for all domain errors raised by the library. CLI maps these to
/// exit code 1, usage problems to 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Flat layout used throughout: vertex i occupies entries [3i, 3i+3) as x,y,z.
inline VecX flatten(const std::vector<Vec3>& pts) {
  VecX out(3 * static_cast<Eigen::Index>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i) out.segment<3>(3 * i) = pts[i];
  return out;
}

inline std::vector<Vec3> unflatten(const VecX& v) {
  require(v.size() % 3 == 0, "unflatten: length not divisible by 3");
  std::vector<Vec3> out(static_cast<size_t>(v.size() / 3));
  for (size_t i = 0; i < out.size(); ++i) out[i] = v.segment<3>(3 * i);
  return out;
}

/// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
/// streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Vec3 normal3(double stddev = 1.0) {
    return Vec3(normal() * stddev, normal() * stddev, normal() * stddev);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lamina
