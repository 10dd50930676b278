#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace vpcube {

/// Largest ambient dimension supported. Points and Jacobians are stored
/// inline (no heap allocation per evaluation).
inline constexpr int kMaxDim = 6;

using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Base of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad parameter ranges, invalid programs or configs.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A construction hypothesis does not hold or a search could not succeed.
class Infeasible : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

inline void check_dimension(int d) {
  require(d >= 1 && d <= kMaxDim, "dimension must be in [1, " + std::to_string(kMaxDim) + "]");
}

inline Point make_point(std::initializer_list<double> xs) {
  Point p(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) p(i++) = x;
  return p;
}

inline Point zeros(int d) { return Point::Zero(d); }

inline Point unit_vector(int d, int axis) {
  Point e = Point::Zero(d);
  e(axis) = 1.0;
  return e;
}

inline bool all_finite(const Point& x) { return x.allFinite(); }

/// Distance from x to the boundary of the unit cube (negative outside).
inline double distance_to_unit_boundary(const Point& x) {
  double m = kInf;
  for (Eigen::Index i = 0; i < x.size(); ++i) m = std::min({m, x(i), 1.0 - x(i)});
  return m;
}

inline bool in_open_unit_cube(const Point& x) { return distance_to_unit_boundary(x) > 0.0; }

// ---------------------------------------------------------------------------
// Random streams

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent generator for (seed, stream); streams never share state.
inline Rng substream(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline double uniform01(Rng& rng) {
  // 53 random bits, reproducible across standard libraries.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline double standard_normal(Rng& rng) {
  // Box-Muller; keeps the stream independent of libstdc++'s distribution internals.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

inline Point random_unit_vector(Rng& rng, int d) {
  Point v(d);
  do {
    for (int i = 0; i < d; ++i) v(i) = standard_normal(rng);
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

inline Point random_point_in_ball(Rng& rng, const Point& center, double radius) {
  const int d = static_cast<int>(center.size());
  Point v = random_unit_vector(rng, d);
  double rad = radius * std::pow(uniform01(rng), 1.0 / d);
  return center + rad * v;
}

/// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace vpcube
