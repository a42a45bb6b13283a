#pragma once

// Shared domain types, noise models and measurement synthesis.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace paretoloc {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

/// Input outside the domain of a model (negative range, bad parameter).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Anchor layouts or linear systems that cannot determine a position.
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Degenerate numerics: zero variances, non positive curvature, singular
/// information matrices, divergent series.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Axis { x1 = 0, x2 = 1 };

inline constexpr double kPi = 3.14159265358979323846;

/// True kinematic state of the mobile node at step k. Heading is kept
/// unwrapped and speed may be negative under the CV model.
struct TruthState {
  Vec2 position = Vec2::Zero();
  double speed = 0.0;
  double heading = 0.0;
  int k = 0;

  [[nodiscard]] Vec4 as_vector() const { return {position.x(), position.y(), speed, heading}; }
};

/// Fixed anchors ("slaves"). The last anchor is the reference of the
/// linearized ranging system.
class AnchorSet {
 public:
  AnchorSet() = default;

  explicit AnchorSet(std::vector<Vec2> positions) : positions_(std::move(positions)) {
    if (positions_.size() < 4) {
      throw GeometryError("at least 4 anchors are required, got " + std::to_string(positions_.size()));
    }
    for (std::size_t i = 0; i < positions_.size(); ++i) {
      for (std::size_t j = i + 1; j < positions_.size(); ++j) {
        if ((positions_[i] - positions_[j]).norm() < 1e-9) {
          throw GeometryError("anchors " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
        }
      }
    }
    // Rank of the difference vectors to the reference anchor.
    Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
    const Vec2& ref = positions_.back();
    double scale = 0.0;
    for (const auto& p : positions_) {
      const Vec2 d = p - ref;
      scatter += d * d.transpose();
      scale = std::max(scale, d.squaredNorm());
    }
    if (std::abs(scatter.determinant()) <= 1e-12 * scale * scale) {
      throw GeometryError("anchors are collinear");
    }
  }

  [[nodiscard]] std::size_t size() const { return positions_.size(); }
  [[nodiscard]] const Vec2& operator[](std::size_t i) const { return positions_[i]; }
  [[nodiscard]] std::span<const Vec2> positions() const { return positions_; }

  [[nodiscard]] static AnchorSet square(double side) {
    return AnchorSet({{0.0, 0.0}, {side, 0.0}, {0.0, side}, {side, side}});
  }

 private:
  std::vector<Vec2> positions_;
};

/// Range-dependent variance sigma0^2 * exp(kappa * r).
struct RangeNoiseModel {
  double sigma0_sq = 0.0625;
  double kappa_sigma = 0.25;

  RangeNoiseModel() = default;
  RangeNoiseModel(double sigma0_sq_, double kappa_) : sigma0_sq(sigma0_sq_), kappa_sigma(kappa_) {
    if (!(sigma0_sq >= 0.0) || !(kappa_sigma >= 0.0)) {
      throw DomainError("range noise model needs sigma0_sq >= 0 and kappa >= 0");
    }
  }
  static RangeNoiseModel from_sigma0(double sigma0, double kappa) { return {sigma0 * sigma0, kappa}; }

  [[nodiscard]] bool noiseless() const { return sigma0_sq == 0.0; }
};

/// Standard deviations of the speed and heading sensors.
struct SensorNoiseModel {
  double sigma_speed = 0.05;
  double sigma_heading = kPi / 8.0;

  SensorNoiseModel() = default;
  SensorNoiseModel(double sv, double sphi) : sigma_speed(sv), sigma_heading(sphi) {
    if (!(sv >= 0.0) || !(sphi >= 0.0)) {
      throw DomainError("sensor noise standard deviations must be non-negative");
    }
  }
};

/// Process noise and sampling period of the stochastic constant-velocity
/// model p_{k+1} = f(p_k) + v_k.
struct CvProcessModel {
  double sigma1_sq = 1e-4;
  double sigma2_sq = 1e-4;
  double sigma3_sq = 1e-4;
  double sigma4_sq = 1e-3;
  double T = 0.1;

  CvProcessModel() = default;
  CvProcessModel(double s12, double s3, double s4, double period)
      : sigma1_sq(s12), sigma2_sq(s12), sigma3_sq(s3), sigma4_sq(s4), T(period) {
    validate();
  }

  void validate() const {
    if (sigma1_sq != sigma2_sq) throw DomainError("CV model requires sigma1_sq == sigma2_sq");
    if (sigma1_sq < 0 || sigma3_sq < 0 || sigma4_sq < 0) throw DomainError("CV process variances must be >= 0");
    if (!(T > 0)) throw DomainError("sampling period must be positive");
  }

  [[nodiscard]] Vec4 variances() const { return {sigma1_sq, sigma2_sq, sigma3_sq, sigma4_sq}; }
};

/// Noisy ranges to every anchor together with speed and heading readings.
struct MeasurementFrame {
  std::vector<double> ranges;
  double speed = 0.0;
  double heading = 0.0;
  int k = 0;
};

[[nodiscard]] inline double range_variance(double r, const RangeNoiseModel& model) {
  if (r < 0.0 || std::isnan(r)) throw DomainError("range must be non-negative");
  return model.sigma0_sq * std::exp(model.kappa_sigma * r);
}

[[nodiscard]] inline double true_range(const Vec2& position, std::size_t anchor_index, const AnchorSet& anchors) {
  return (anchors[anchor_index] - position).norm();
}

[[nodiscard]] inline double true_range(const TruthState& state, std::size_t anchor_index, const AnchorSet& anchors) {
  return true_range(state.position, anchor_index, anchors);
}

[[nodiscard]] inline std::vector<double> true_ranges(const Vec2& position, const AnchorSet& anchors) {
  std::vector<double> out(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) out[i] = true_range(position, i, anchors);
  return out;
}

[[nodiscard]] inline std::vector<double> range_variances(std::span<const double> ranges, const RangeNoiseModel& model) {
  std::vector<double> out(ranges.size());
  for (std::size_t i = 0; i < ranges.size(); ++i) out[i] = range_variance(std::max(ranges[i], 0.0), model);
  return out;
}

/// Independent generators for each noise source of one Monte Carlo run.
/// Every stream is seeded from (seed, run, stream id), so switching a sensor
/// off leaves the others' sequences untouched.
class RngStreams {
 public:
  enum Stream : std::uint32_t { kProcess = 1, kRange = 2, kSpeed = 3, kHeading = 4, kAux = 5 };

  RngStreams(std::uint64_t seed, std::uint64_t run)
      : process_(make(seed, run, kProcess)),
        range_(make(seed, run, kRange)),
        speed_(make(seed, run, kSpeed)),
        heading_(make(seed, run, kHeading)),
        aux_(make(seed, run, kAux)) {}

  std::mt19937_64& process() { return process_; }
  std::mt19937_64& range() { return range_; }
  std::mt19937_64& speed() { return speed_; }
  std::mt19937_64& heading() { return heading_; }
  std::mt19937_64& aux() { return aux_; }

  static std::mt19937_64 make(std::uint64_t seed, std::uint64_t run, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(run >> 32), stream};
    return std::mt19937_64(seq);
  }

 private:
  std::mt19937_64 process_, range_, speed_, heading_, aux_;
};

/// Standard normal draw scaled by sigma. sigma == 0 returns exactly 0 and
/// still advances the generator, so zero-noise runs stay aligned.
inline double gaussian(std::mt19937_64& gen, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double u = n(gen);
  return sigma == 0.0 ? 0.0 : sigma * u;
}

[[nodiscard]] inline MeasurementFrame synthesize_measurements(const TruthState& state, const AnchorSet& anchors,
                                                              RngStreams& rng, const RangeNoiseModel& range_model,
                                                              const SensorNoiseModel& sensors) {
  MeasurementFrame frame;
  frame.k = state.k;
  frame.ranges.resize(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const double r = true_range(state, i, anchors);
    frame.ranges[i] = r + gaussian(rng.range(), std::sqrt(range_variance(r, range_model)));
  }
  frame.speed = state.speed + gaussian(rng.speed(), sensors.sigma_speed);
  frame.heading = state.heading + gaussian(rng.heading(), sensors.sigma_heading);
  return frame;
}

}  // namespace paretoloc
