#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

namespace splat4d::geom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;

// Rigid transform taking local coordinates to the parent frame:
// X_parent = R(q) * x + p. Quaternion stored (w, x, y, z), kept unit.
struct Pose {
  Vec4 q{1, 0, 0, 0};
  Vec3 p{0, 0, 0};
};

Pose pose_identity();
// compose(a, b): apply b first, then a.
Pose compose(const Pose& a, const Pose& b);
Pose pose_inverse(const Pose& a);
Vec3 apply(const Pose& T, const Vec3& x);
Eigen::Matrix3d rotation_matrix(const Pose& T);
Pose pose_from_yaw(double yaw, const Vec3& p);

// quaternion helpers, (w,x,y,z) order throughout
Vec4 quat_mul(const Vec4& a, const Vec4& b);
Vec4 quat_conj(const Vec4& q);
Vec4 quat_normalize(const Vec4& q);
Eigen::Matrix3d quat_to_rot(const Vec4& q_unit);
Vec4 rot_to_quat(const Eigen::Matrix3d& R);
// axis-angle exponential: v = axis * angle -> unit quaternion
Vec4 quat_exp(const Vec3& v);

// Pinhole camera. ego_to_camera maps ego-frame points into the camera frame
// (camera convention: x right, y down, z forward).
struct CameraModel {
  double fx = 100, fy = 100, cx = 50, cy = 50;
  int width = 100, height = 100;
  Pose ego_to_camera;
  double near_clip = 0.1;
};

// rotation mapping ego (x fwd, y left, z up) -> camera (-y, -z, x), zero offset
Pose default_ego_to_camera();

// Timestamped pose sequence. frame_id names the coordinate frame the poses
// map into ("world" or "ego_start").
struct Trajectory {
  std::string frame_id;
  std::vector<double> t;
  std::vector<Pose> poses;
  size_t size() const { return poses.size(); }
};

// Re-expresses a world-frame trajectory relative to M0 (the world pose of the
// trajectory start). Requires frame_id == "world"; the output frame 0 is the
// identity when poses[0] == M0.
Trajectory to_ego_start(const Trajectory& traj, const Pose& M0);

// p is in the camera frame; nullopt when z <= near_clip.
std::optional<Vec2> project_point(const CameraModel& cam, const Vec3& p_cam);

// d(pixel)/d(p_cam) of the pinhole map; throws std::invalid_argument when
// z <= near_clip.
Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraModel& cam,
                                                const Vec3& p_cam);

// Upright 3D box: center, size (length, width, height), yaw about +z.
struct Box3D {
  Vec3 center{0, 0, 0};
  Vec3 size{1, 1, 1};
  double heading = 0;
  int agent_id = 0;
};

// Axis-aligned pixel-space box, lo <= hi.
struct Box2D {
  Vec2 lo{0, 0};
  Vec2 hi{0, 0};
  int agent_id = 0;
};

// Projects a scene-frame box through the ego pose into the image. Corners
// behind the near plane are handled by clipping box edges at z = near_clip.
// Absent when fully behind the near plane, off-image, or degenerate (< 1 px).
std::optional<Box2D> project_box(const Box3D& box, const Pose& ego_pose,
                                 const CameraModel& cam);

// Projects a scene-frame polyline into pixel segments. Segments fully behind
// the near plane are dropped; crossing segments are clipped at z = near_clip.
std::vector<std::array<Vec2, 2>> project_polyline(const std::vector<Vec3>& pts,
                                                  const Pose& ego_pose,
                                                  const CameraModel& cam);

}  // namespace splat4d::geom
