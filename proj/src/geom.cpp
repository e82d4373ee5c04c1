#include "splat4d/geom.hpp"

#include <cmath>
#include <stdexcept>

namespace splat4d::geom {

Pose pose_identity() { return Pose{}; }

Vec4 quat_mul(const Vec4& a, const Vec4& b) {
  return Vec4{a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Vec4 quat_conj(const Vec4& q) { return Vec4{q[0], -q[1], -q[2], -q[3]}; }

Vec4 quat_normalize(const Vec4& q) {
  double n = q.norm();
  if (n < 1e-300) throw std::invalid_argument("zero quaternion");
  return q / n;
}

Eigen::Matrix3d quat_to_rot(const Vec4& q) {
  double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

Vec4 rot_to_quat(const Eigen::Matrix3d& R) {
  Eigen::Quaterniond eq(R);
  Vec4 q{eq.w(), eq.x(), eq.y(), eq.z()};
  if (q[0] < 0) q = -q;
  return quat_normalize(q);
}

Vec4 quat_exp(const Vec3& v) {
  double th = v.norm();
  double half = 0.5 * th;
  // sin(th/2)/th with a series guard near zero
  double k = th > 1e-8 ? std::sin(half) / th : 0.5 - th * th / 48.0;
  return Vec4{std::cos(half), k * v[0], k * v[1], k * v[2]};
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.q = quat_normalize(quat_mul(a.q, b.q));
  out.p = quat_to_rot(a.q) * b.p + a.p;
  return out;
}

Pose pose_inverse(const Pose& a) {
  Pose out;
  out.q = quat_conj(quat_normalize(a.q));
  out.p = -(quat_to_rot(out.q) * a.p);
  return out;
}

Vec3 apply(const Pose& T, const Vec3& x) { return quat_to_rot(T.q) * x + T.p; }

Eigen::Matrix3d rotation_matrix(const Pose& T) { return quat_to_rot(T.q); }

Pose pose_from_yaw(double yaw, const Vec3& p) {
  Pose out;
  out.q = Vec4{std::cos(yaw / 2), 0, 0, std::sin(yaw / 2)};
  out.p = p;
  return out;
}

Pose default_ego_to_camera() {
  Eigen::Matrix3d R;
  // ego (x fwd, y left, z up) -> camera (x right, y down, z fwd)
  R << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  Pose out;
  out.q = rot_to_quat(R);
  out.p = Vec3::Zero();
  return out;
}

Trajectory to_ego_start(const Trajectory& traj, const Pose& M0) {
  if (traj.frame_id != "world")
    throw std::invalid_argument("to_ego_start expects a world-frame trajectory, got '" +
                                traj.frame_id + "'");
  Trajectory out;
  out.frame_id = "ego_start";
  out.t = traj.t;
  out.poses.reserve(traj.poses.size());
  Pose inv = pose_inverse(M0);
  for (const Pose& P : traj.poses) out.poses.push_back(compose(inv, P));
  return out;
}

std::optional<Vec2> project_point(const CameraModel& cam, const Vec3& p) {
  if (p.z() <= cam.near_clip) return std::nullopt;
  return Vec2{cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraModel& cam,
                                                const Vec3& p) {
  if (p.z() <= cam.near_clip)
    throw std::invalid_argument("projection_jacobian: point at or behind near plane");
  double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> J;
  J << cam.fx * iz, 0, -cam.fx * p.x() * iz * iz, 0, cam.fy * iz,
      -cam.fy * p.y() * iz * iz;
  return J;
}

namespace {

// view transform: scene point -> camera frame
Pose view_pose(const Pose& ego_pose, const CameraModel& cam) {
  return compose(cam.ego_to_camera, pose_inverse(ego_pose));
}

}  // namespace

std::optional<Box2D> project_box(const Box3D& box, const Pose& ego_pose,
                                 const CameraModel& cam) {
  Pose V = view_pose(ego_pose, cam);
  Eigen::Matrix3d Rb = Eigen::AngleAxisd(box.heading, Vec3::UnitZ()).toRotationMatrix();
  std::array<Vec3, 8> corners;
  int n = 0;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) {
        Vec3 local{0.5 * sx * box.size.x(), 0.5 * sy * box.size.y(),
                   0.5 * sz * box.size.z()};
        corners[n++] = apply(V, box.center + Rb * local);
      }

  // gather projectable points: front corners plus edge intersections with the
  // near plane
  static const int edges[12][2] = {{0, 1}, {0, 2}, {0, 4}, {1, 3}, {1, 5}, {2, 3},
                                   {2, 6}, {3, 7}, {4, 5}, {4, 6}, {5, 7}, {6, 7}};
  std::vector<Vec3> pts;
  pts.reserve(16);
  for (const Vec3& c : corners)
    if (c.z() > cam.near_clip) pts.push_back(c);
  if (pts.empty()) return std::nullopt;
  for (auto& e : edges) {
    const Vec3 &a = corners[e[0]], &b = corners[e[1]];
    bool fa = a.z() > cam.near_clip, fb = b.z() > cam.near_clip;
    if (fa == fb) continue;
    double s = (cam.near_clip - a.z()) / (b.z() - a.z());
    Vec3 hit = a + s * (b - a);
    hit.z() = cam.near_clip * (1 + 1e-12) + 1e-12;  // keep strictly in front
    pts.push_back(hit);
  }

  Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
  for (const Vec3& p : pts) {
    auto px = project_point(cam, p);
    if (!px) continue;
    lo = lo.cwiseMin(*px);
    hi = hi.cwiseMax(*px);
  }
  lo = lo.cwiseMax(Vec2{0, 0});
  hi = hi.cwiseMin(Vec2{double(cam.width), double(cam.height)});
  if (hi.x() - lo.x() < 1.0 || hi.y() - lo.y() < 1.0) return std::nullopt;
  return Box2D{lo, hi, box.agent_id};
}

std::vector<std::array<Vec2, 2>> project_polyline(const std::vector<Vec3>& pts,
                                                  const Pose& ego_pose,
                                                  const CameraModel& cam) {
  std::vector<std::array<Vec2, 2>> out;
  if (pts.size() < 2) return out;
  Pose V = view_pose(ego_pose, cam);
  std::vector<Vec3> c(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) c[i] = apply(V, pts[i]);
  for (size_t i = 0; i + 1 < c.size(); ++i) {
    Vec3 a = c[i], b = c[i + 1];
    bool fa = a.z() > cam.near_clip, fb = b.z() > cam.near_clip;
    if (!fa && !fb) continue;
    if (fa != fb) {
      double s = (cam.near_clip - a.z()) / (b.z() - a.z());
      Vec3 hit = a + s * (b - a);
      hit.z() = cam.near_clip + 1e-12;
      (fa ? b : a) = hit;
    }
    auto pa = project_point(cam, a), pb = project_point(cam, b);
    if (pa && pb) out.push_back({*pa, *pb});
  }
  return out;
}

}  // namespace splat4d::geom
