#pragma once

// Dead-reckoning propagation and the moments of the measured
// speed-heading products V~ cos(phi~), V~ sin(phi~).

#include <cmath>

#include "paretoloc/core.hpp"

namespace paretoloc {

/// Which prefactor to use for E{V~^2 cos^2 phi~}. The derived form uses
/// E{V~^2} = V^2 + sigma_V^2; the alternative multiplies by sigma_V^2 only
/// and is kept so the discrepancy can be demonstrated.
enum class DrSecondMomentForm { derived, sigma_only };

struct DrMoments {
  Vec2 first = Vec2::Zero();   // E{V~ cos}, E{V~ sin}
  Vec2 second = Vec2::Zero();  // E{V~^2 cos^2}, E{V~^2 sin^2}

  [[nodiscard]] Vec2 variance() const { return second - first.cwiseProduct(first); }
};

[[nodiscard]] inline Vec2 dr_predict(const Vec2& prev_estimate, double speed, double heading, double T) {
  if (!(T > 0.0)) throw DomainError("dr_predict: T must be positive");
  return prev_estimate + speed * T * Vec2(std::cos(heading), std::sin(heading));
}

[[nodiscard]] inline Vec2 dr_predict(const Vec2& prev_estimate, const MeasurementFrame& frame, double T) {
  return dr_predict(prev_estimate, frame.speed, frame.heading, T);
}

[[nodiscard]] inline double dr_first_moment(double V, double phi, double sigma_phi, Axis axis = Axis::x1) {
  if (sigma_phi < 0.0) throw DomainError("sigma_phi must be non-negative");
  const double trig = axis == Axis::x1 ? std::cos(phi) : std::sin(phi);
  return V * trig * std::exp(-0.5 * sigma_phi * sigma_phi);
}

[[nodiscard]] inline double dr_second_moment(double V, double sigma_V, double phi, double sigma_phi, Axis axis = Axis::x1,
                                             DrSecondMomentForm form = DrSecondMomentForm::derived) {
  if (sigma_V < 0.0 || sigma_phi < 0.0) throw DomainError("noise standard deviations must be non-negative");
  const double sign = axis == Axis::x1 ? 1.0 : -1.0;
  const double trig_sq = 0.5 + sign * 0.5 * std::cos(2.0 * phi) * std::exp(-2.0 * sigma_phi * sigma_phi);
  const double speed_sq = form == DrSecondMomentForm::derived ? V * V + sigma_V * sigma_V : sigma_V * sigma_V;
  return speed_sq * trig_sq;
}

[[nodiscard]] inline DrMoments dr_moments(double V, double phi, const SensorNoiseModel& sensors) {
  DrMoments m;
  for (Axis a : {Axis::x1, Axis::x2}) {
    const auto i = static_cast<int>(a);
    m.first(i) = dr_first_moment(V, phi, sensors.sigma_heading, a);
    m.second(i) = dr_second_moment(V, sensors.sigma_speed, phi, sensors.sigma_heading, a);
  }
  return m;
}

}  // namespace paretoloc
