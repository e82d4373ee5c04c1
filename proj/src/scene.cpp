#include "splat4d/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "splat4d/rng.hpp"

namespace splat4d::gauss {

using geom::quat_exp;
using geom::quat_mul;
using geom::quat_normalize;
using geom::quat_to_rot;

TemporalCoeffs TemporalCoeffs::zero(int degree) {
  TemporalCoeffs c;
  c.dpos.setZero(3, degree);
  c.dopacity.setZero(1, degree);
  c.dscale.setZero(3, degree);
  c.drot.setZero(3, degree);
  c.dcolor.setZero(3, degree);
  return c;
}

void GaussianScene::reserve(size_t n) {
  pos.reserve(3 * n);
  opacity.reserve(n);
  log_scale.reserve(3 * n);
  rot.reserve(4 * n);
  color.reserve(3 * n);
  size_t d = static_cast<size_t>(degree);
  dpos.reserve(3 * d * n);
  dopacity.reserve(d * n);
  dscale.reserve(3 * d * n);
  drot.reserve(3 * d * n);
  dcolor.reserve(3 * d * n);
  agent_id.reserve(n);
}

void GaussianScene::add(const GaussianPrimitive& g) {
  if (g.temporal.dpos.cols() != degree)
    throw std::invalid_argument("primitive temporal degree does not match scene");
  for (int k = 0; k < 3; ++k) pos.push_back(g.position[k]);
  opacity.push_back(g.opacity_logit);
  for (int k = 0; k < 3; ++k) log_scale.push_back(g.log_scale[k]);
  for (int k = 0; k < 4; ++k) rot.push_back(g.rotation[k]);
  for (int k = 0; k < 3; ++k) color.push_back(g.color_logit[k]);
  for (int r = 0; r < 3; ++r)
    for (int d = 0; d < degree; ++d) dpos.push_back(g.temporal.dpos(r, d));
  for (int d = 0; d < degree; ++d) dopacity.push_back(g.temporal.dopacity(0, d));
  for (int r = 0; r < 3; ++r)
    for (int d = 0; d < degree; ++d) dscale.push_back(g.temporal.dscale(r, d));
  for (int r = 0; r < 3; ++r)
    for (int d = 0; d < degree; ++d) drot.push_back(g.temporal.drot(r, d));
  for (int r = 0; r < 3; ++r)
    for (int d = 0; d < degree; ++d) dcolor.push_back(g.temporal.dcolor(r, d));
  agent_id.push_back(g.agent_id);
}

GaussianPrimitive GaussianScene::primitive(size_t i) const {
  GaussianPrimitive g;
  g.position = Vec3{pos[3 * i], pos[3 * i + 1], pos[3 * i + 2]};
  g.opacity_logit = opacity[i];
  g.log_scale = Vec3{log_scale[3 * i], log_scale[3 * i + 1], log_scale[3 * i + 2]};
  g.rotation = Vec4{rot[4 * i], rot[4 * i + 1], rot[4 * i + 2], rot[4 * i + 3]};
  g.color_logit = Vec3{color[3 * i], color[3 * i + 1], color[3 * i + 2]};
  g.agent_id = agent_id[i];
  g.temporal = TemporalCoeffs::zero(degree);
  size_t d = static_cast<size_t>(degree);
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < degree; ++k) {
      g.temporal.dpos(r, k) = dpos[(3 * i + r) * d + k];
      g.temporal.dscale(r, k) = dscale[(3 * i + r) * d + k];
      g.temporal.drot(r, k) = drot[(3 * i + r) * d + k];
      g.temporal.dcolor(r, k) = dcolor[(3 * i + r) * d + k];
    }
  for (int k = 0; k < degree; ++k) g.temporal.dopacity(0, k) = dopacity[i * d + k];
  return g;
}

void GaussianScene::time_basis(double t, double* out) const {
  double dt = t - t0;
  double acc = 1.0;
  for (int k = 0; k < degree; ++k) {
    acc *= dt;
    out[k] = acc;
  }
}

SceneGrads SceneGrads::zeros(const GaussianScene& s) {
  SceneGrads g;
  g.pos.assign(s.pos.size(), 0.0);
  g.opacity.assign(s.opacity.size(), 0.0);
  g.log_scale.assign(s.log_scale.size(), 0.0);
  g.rot.assign(s.rot.size(), 0.0);
  g.color.assign(s.color.size(), 0.0);
  g.dpos.assign(s.dpos.size(), 0.0);
  g.dopacity.assign(s.dopacity.size(), 0.0);
  g.dscale.assign(s.dscale.size(), 0.0);
  g.drot.assign(s.drot.size(), 0.0);
  g.dcolor.assign(s.dcolor.size(), 0.0);
  return g;
}

void SceneGrads::accumulate(const SceneGrads& o, double w) {
  auto axpy = [w](std::vector<double>& a, const std::vector<double>& b) {
    for (size_t i = 0; i < a.size(); ++i) a[i] += w * b[i];
  };
  axpy(pos, o.pos);
  axpy(opacity, o.opacity);
  axpy(log_scale, o.log_scale);
  axpy(rot, o.rot);
  axpy(color, o.color);
  axpy(dpos, o.dpos);
  axpy(dopacity, o.dopacity);
  axpy(dscale, o.dscale);
  axpy(drot, o.drot);
  axpy(dcolor, o.dcolor);
}

DeformedGaussian deform(const GaussianScene& s, size_t i, double t) {
  constexpr double kSlack = 1e-9;
  if (t < s.t_min - kSlack || t > s.t_max + kSlack)
    throw std::out_of_range("deform: t outside scene time range");
  int D = s.degree;
  double basis[16];
  s.time_basis(t, basis);

  DeformedGaussian out;
  out.agent_id = s.agent_id[i];
  size_t d = static_cast<size_t>(D);
  for (int r = 0; r < 3; ++r) {
    double px = s.pos[3 * i + r], ls = s.log_scale[3 * i + r], c = s.color[3 * i + r];
    for (int k = 0; k < D; ++k) {
      px += s.dpos[(3 * i + r) * d + k] * basis[k];
      ls += s.dscale[(3 * i + r) * d + k] * basis[k];
      c += s.dcolor[(3 * i + r) * d + k] * basis[k];
    }
    out.position[r] = px;
    out.log_scale[r] = ls;
    out.color_logit[r] = c;
  }
  double g = s.opacity[i];
  for (int k = 0; k < D; ++k) g += s.dopacity[i * d + k] * basis[k];
  out.opacity_logit = g;

  Vec3 w = Vec3::Zero();
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < D; ++k) w[r] += s.drot[(3 * i + r) * d + k] * basis[k];
  Vec4 base{s.rot[4 * i], s.rot[4 * i + 1], s.rot[4 * i + 2], s.rot[4 * i + 3]};
  // exact identity at t0: skip the renormalization so parameters pass through
  // bit-for-bit (the base quaternion is maintained unit elsewhere)
  out.rotation = w.isZero(0.0) ? base : quat_normalize(quat_mul(quat_exp(w), base));
  return out;
}

Eigen::Matrix3d covariance(const Vec3& log_scale, const Vec4& rot_raw) {
  Eigen::Matrix3d R = quat_to_rot(quat_normalize(rot_raw));
  Vec3 sc;
  for (int k = 0; k < 3; ++k)
    sc[k] = std::clamp(std::exp(log_scale[k]), kScaleMin, kScaleMax);
  return R * sc.array().square().matrix().asDiagonal() * R.transpose();
}

Eigen::Matrix<double, 4, 3> quat_exp_jacobian(const Vec3& v) {
  double th = v.norm();
  Eigen::Matrix<double, 4, 3> J;
  if (th < 1e-8) {
    // series: w = cos(th/2), xyz = v*(1/2 - th^2/48)
    double k = 0.5 - th * th / 48.0;
    J.row(0) = -0.25 * v.transpose();
    J.bottomRows<3>() = k * Eigen::Matrix3d::Identity() -
                        (1.0 / 24.0) * (v * v.transpose());
    return J;
  }
  double half = 0.5 * th;
  double s = std::sin(half), c = std::cos(half);
  double k = s / th;
  // d w / d v = -0.5 * s * v/th
  J.row(0) = (-0.5 * k) * v.transpose();
  // d (k*v) / d v = k I + v * (dk/dth) * (v/th)^T, dk/dth = (0.5 c th - s)/th^2
  double dk = (0.5 * c * th - s) / (th * th);
  J.bottomRows<3>() =
      k * Eigen::Matrix3d::Identity() + (dk / th) * (v * v.transpose());
  return J;
}

Eigen::Matrix4d quat_mul_jac_a(const Vec4& b) {
  Eigen::Matrix4d M;
  M << b[0], -b[1], -b[2], -b[3],
       b[1],  b[0],  b[3], -b[2],
       b[2], -b[3],  b[0],  b[1],
       b[3],  b[2], -b[1],  b[0];
  return M;
}

Eigen::Matrix4d quat_mul_jac_b(const Vec4& a) {
  Eigen::Matrix4d M;
  M << a[0], -a[1], -a[2], -a[3],
       a[1],  a[0], -a[3],  a[2],
       a[2],  a[3],  a[0], -a[1],
       a[3], -a[2],  a[1],  a[0];
  return M;
}

Eigen::Matrix4d quat_normalize_jacobian(const Vec4& q) {
  double n = q.norm();
  Vec4 u = q / n;
  return (Eigen::Matrix4d::Identity() - u * u.transpose()) / n;
}

std::array<Eigen::Matrix3d, 4> quat_to_rot_jacobian(const Vec4& q) {
  double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Eigen::Matrix3d, 4> J;
  J[0] << 0, -2 * z, 2 * y,
          2 * z, 0, -2 * x,
          -2 * y, 2 * x, 0;
  J[1] << 0, 2 * y, 2 * z,
          2 * y, -4 * x, -2 * w,
          2 * z, 2 * w, -4 * x;
  J[2] << -4 * y, 2 * x, 2 * w,
          2 * x, 0, 2 * z,
          -2 * w, 2 * z, -4 * y;
  J[3] << -4 * z, -2 * w, 2 * x,
          2 * w, -4 * z, 2 * y,
          2 * x, 2 * y, 0;
  return J;
}

void covariance_backward(const Vec3& log_scale, const Vec4& rot_raw,
                         const Eigen::Matrix3d& dL_dSigma, Vec3* d_log_scale,
                         Vec4* d_rot_raw) {
  Vec4 qn = quat_normalize(rot_raw);
  Eigen::Matrix3d R = quat_to_rot(qn);
  Vec3 sc, dsc_dls;
  for (int k = 0; k < 3; ++k) {
    double e = std::exp(log_scale[k]);
    sc[k] = std::clamp(e, kScaleMin, kScaleMax);
    dsc_dls[k] = (e > kScaleMin && e < kScaleMax) ? e : 0.0;
  }
  Eigen::Matrix3d G = 0.5 * (dL_dSigma + dL_dSigma.transpose());

  // Sigma = sum_k s_k^2 u_k u_k^T with u_k = R col k
  for (int k = 0; k < 3; ++k) {
    double u_G_u = R.col(k).dot(G * R.col(k));
    (*d_log_scale)[k] = 2.0 * sc[k] * dsc_dls[k] * u_G_u;
  }

  Eigen::Matrix3d D = sc.array().square().matrix().asDiagonal();
  Eigen::Matrix3d dR = 2.0 * G * R * D;

  auto JR = quat_to_rot_jacobian(qn);
  Vec4 dqn;
  for (int k = 0; k < 4; ++k) dqn[k] = (JR[k].array() * dR.array()).sum();
  *d_rot_raw = quat_normalize_jacobian(rot_raw).transpose() * dqn;
}

GaussianScene init_learnable(const GaussianScene& oracle, size_t count,
                             double noise_sigma, uint64_t seed) {
  if (oracle.size() == 0) throw std::invalid_argument("init_learnable: empty oracle scene");
  if (count == 0) throw std::invalid_argument("init_learnable: count must be positive");
  size_t n = std::min(count, oracle.size());
  Rng rng(seed);

  std::vector<size_t> idx(oracle.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  rng.shuffle(idx);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());

  GaussianScene out;
  out.degree = oracle.degree;
  out.t0 = oracle.t0;
  out.t_min = oracle.t_min;
  out.t_max = oracle.t_max;
  out.reserve(n);

  std::vector<Vec3> positions(n);
  for (size_t j = 0; j < n; ++j) {
    size_t i = idx[j];
    Vec3 p{oracle.pos[3 * i], oracle.pos[3 * i + 1], oracle.pos[3 * i + 2]};
    for (int k = 0; k < 3; ++k) p[k] += rng.normal(0.0, noise_sigma);
    positions[j] = p;
  }

  // isotropic scale from mean nearest-neighbor spacing among the samples
  double nn_sum = 0;
  for (size_t a = 0; a < n; ++a) {
    double best = 1e300;
    for (size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      best = std::min(best, (positions[a] - positions[b]).squaredNorm());
    }
    nn_sum += std::sqrt(best);
  }
  double spacing = n > 1 ? nn_sum / double(n) : 0.5;
  double ls = std::log(std::clamp(0.7 * spacing, 0.02, 2.0));

  for (size_t j = 0; j < n; ++j) {
    GaussianPrimitive g;
    g.position = positions[j];
    g.opacity_logit = 0.0;  // sigmoid -> 0.5
    g.log_scale = Vec3{ls, ls, ls};
    g.rotation = Vec4{1, 0, 0, 0};
    g.color_logit = Vec3{0, 0, 0};  // sigmoid -> mid-gray
    g.agent_id = oracle.agent_id[idx[j]];
    g.temporal = TemporalCoeffs::zero(out.degree);
    out.add(g);
  }
  return out;
}

}  // namespace splat4d::gauss
