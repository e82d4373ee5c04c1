#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "splat4d/geom.hpp"

namespace splat4d::gauss {

using geom::Vec3;
using geom::Vec4;

constexpr double kScaleMin = 1e-6;
constexpr double kScaleMax = 1e3;

// Per-attribute polynomial offset coefficients over the zero-at-t0 basis
// {(t-t0), ..., (t-t0)^D}; rows are attribute dims, cols are basis terms.
struct TemporalCoeffs {
  Eigen::Matrix<double, 3, Eigen::Dynamic> dpos;    // 3 x D
  Eigen::Matrix<double, 1, Eigen::Dynamic> dopacity;  // 1 x D
  Eigen::Matrix<double, 3, Eigen::Dynamic> dscale;  // 3 x D
  Eigen::Matrix<double, 3, Eigen::Dynamic> drot;    // 3 x D, axis-angle
  Eigen::Matrix<double, 3, Eigen::Dynamic> dcolor;  // 3 x D
  static TemporalCoeffs zero(int degree);
};

struct GaussianPrimitive {
  Vec3 position{0, 0, 0};       // ego_start frame at canonical time t0
  double opacity_logit = 0;     // rendered opacity = sigmoid
  Vec3 log_scale{0, 0, 0};      // rendered scale = exp, clamped
  Vec4 rotation{1, 0, 0, 0};    // (w,x,y,z), kept unit
  Vec3 color_logit{0, 0, 0};    // rendered color = sigmoid per channel
  int agent_id = 0;             // 0 = static background
  TemporalCoeffs temporal;
};

// Struct-of-arrays scene storage; flat layouts double as optimizer parameter
// groups. Temporal arrays are primitive-major, then dim-major, degree-minor.
struct GaussianScene {
  int degree = 2;
  double t0 = 0.0;
  double t_min = 0.0, t_max = 0.0;

  std::vector<double> pos;        // 3N
  std::vector<double> opacity;    // N
  std::vector<double> log_scale;  // 3N
  std::vector<double> rot;        // 4N
  std::vector<double> color;      // 3N
  std::vector<double> dpos;       // 3*D*N
  std::vector<double> dopacity;   // D*N
  std::vector<double> dscale;     // 3*D*N
  std::vector<double> drot;       // 3*D*N
  std::vector<double> dcolor;     // 3*D*N
  std::vector<int> agent_id;      // N

  size_t size() const { return opacity.size(); }
  void reserve(size_t n);
  void add(const GaussianPrimitive& g);
  GaussianPrimitive primitive(size_t i) const;

  // out[k] = (t - t0)^(k+1), k in [0, degree)
  void time_basis(double t, double* out) const;
};

// Gradients with the same flat layout as the scene's parameter arrays.
struct SceneGrads {
  std::vector<double> pos, opacity, log_scale, rot, color;
  std::vector<double> dpos, dopacity, dscale, drot, dcolor;
  static SceneGrads zeros(const GaussianScene& s);
  void accumulate(const SceneGrads& other, double w = 1.0);
};

// Deformed (pre-activation) parameters of one primitive at time t.
struct DeformedGaussian {
  Vec3 position;
  double opacity_logit;
  Vec3 log_scale;
  Vec4 rotation;  // unit
  Vec3 color_logit;
  int agent_id;
};

// Evaluates the temporal field; exact identity at t = t0. Throws
// std::out_of_range when t is outside [t_min, t_max].
DeformedGaussian deform(const GaussianScene& s, size_t i, double t);

// Sigma = R diag(scale^2) R^T, scale = exp(log_scale) clamped to
// [kScaleMin, kScaleMax]; rot_raw is normalized internally.
Eigen::Matrix3d covariance(const Vec3& log_scale, const Vec4& rot_raw);

// Chain-rule pieces for the covariance: given symmetric dL/dSigma, gradients
// w.r.t. log-scales and the raw (pre-normalization) quaternion.
void covariance_backward(const Vec3& log_scale, const Vec4& rot_raw,
                         const Eigen::Matrix3d& dL_dSigma, Vec3* d_log_scale,
                         Vec4* d_rot_raw);

// Jacobian helpers used by the renderer backward pass.
Eigen::Matrix<double, 4, 3> quat_exp_jacobian(const Vec3& v);
Eigen::Matrix4d quat_mul_jac_a(const Vec4& b);  // d(a*b)/da
Eigen::Matrix4d quat_mul_jac_b(const Vec4& a);  // d(a*b)/db
Eigen::Matrix4d quat_normalize_jacobian(const Vec4& q);
std::array<Eigen::Matrix3d, 4> quat_to_rot_jacobian(const Vec4& q_unit);

// Training initialization: subsample `count` oracle primitives without
// replacement, jitter positions with N(0, noise_sigma) per axis, reset colors
// to mid-gray and opacity to 0.5, zero the temporal field, keep agent ids.
// Scales are isotropic from nearest-neighbor spacing; rotations identity.
GaussianScene init_learnable(const GaussianScene& oracle, size_t count,
                             double noise_sigma, uint64_t seed);

}  // namespace splat4d::gauss
