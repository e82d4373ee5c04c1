#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <vector>

#include "splat4d/geom.hpp"
#include "splat4d/image.hpp"
#include "splat4d/scene.hpp"

namespace splat4d::raster {

using geom::Vec2;
using geom::Vec3;

// Forward semantics are fully determined by this config: a contribution of
// splat i at pixel p exists iff q = Mahalanobis^2/2 <= q_max and
// alpha = min(alpha_clamp, opacity * exp(-q)) >= min_alpha; contributions
// blend front to back and accumulation stops before adding a contribution
// once transmittance falls below min_transmittance.
struct RasterConfig {
  double q_max = 20.0;
  double min_alpha = 0.0;        // opacity-aware cull; training uses 1/255
  double min_transmittance = 1e-4;
  double alpha_clamp = 0.99;
  double blur_floor = 0.3;       // px^2, added to cov2d diagonal
  double depth_alpha_eps = 1e-3; // expected depth emitted where alpha >= eps
  int tile = 16;
  int threads = 1;
};

struct Splat2D {
  Vec2 mean;             // pixel coords
  Eigen::Matrix2d cov;   // includes the blur floor
  double z;              // camera-frame depth of the center
  Vec3 color;            // after sigmoid
  double opacity;        // after sigmoid
  int agent_id;
};

// ego_pose places the ego body in the scene frame; the view transform is
// cam.ego_to_camera composed with its inverse. Absent when the center is at
// or behind the near plane or the evaluated extent misses the image.
std::optional<Splat2D> project_gaussian(const gauss::DeformedGaussian& g,
                                        const geom::Pose& ego_pose,
                                        const geom::CameraModel& cam,
                                        const RasterConfig& cfg = {});

struct RenderOutput {
  Image image;                      // H x W x 3
  Image depth;                      // H x W x 1, alpha-normalized, 0 where thin
  Image alpha;                      // H x W x 1
  std::map<int, Image> agent_weights;  // agent_id >= 1 -> H x W x 1
};

RenderOutput splat_forward(const gauss::GaussianScene& scene, double t,
                           const geom::Pose& ego_pose,
                           const geom::CameraModel& cam,
                           const RasterConfig& cfg = {});

// Analytic adjoint of splat_forward. dL_ddepth may be empty (treated as
// zero); where the forward alpha is below depth_alpha_eps the depth output is
// constant zero, so no depth gradient flows there. Deterministic for any
// thread count: per-tile partials reduce in fixed tile order.
gauss::SceneGrads splat_backward(const gauss::GaussianScene& scene, double t,
                                 const geom::Pose& ego_pose,
                                 const geom::CameraModel& cam,
                                 const RasterConfig& cfg,
                                 const Image& dL_dimage,
                                 const Image& dL_ddepth);

// One render per trajectory sample; every timestamp must be inside the scene
// time range.
std::vector<RenderOutput> render_video(const gauss::GaussianScene& scene,
                                       const geom::Trajectory& traj,
                                       const geom::CameraModel& cam,
                                       const RasterConfig& cfg = {});

}  // namespace splat4d::raster
