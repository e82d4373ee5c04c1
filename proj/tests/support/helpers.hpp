#pragma once

#include <functional>
#include <string>

#include "splat4d/raster.hpp"
#include "splat4d/rng.hpp"
#include "splat4d/scene.hpp"

namespace testsup {

using namespace splat4d;

// camera whose frame coincides with the scene frame (identity ego_to_camera):
// points along +z are in front
geom::CameraModel eye_camera(int w = 32, int h = 32, double f = 30.0);

// forward-facing camera mounted on the ego body, 1.6 m above the ground
geom::CameraModel drive_camera(int w = 96, int h = 64, double f = 70.0);

// Random scene inside the eye_camera frustum, z in [4,12].
gauss::GaussianScene random_scene(Rng& rng, int n, int degree = 2,
                                  double t_max = 2.0);

// Scene tuned for finite-difference probes: opacities low enough that
// transmittance can never hit the termination threshold, scales bounded away
// from sub-pixel footprints, temporal drift kept small.
gauss::GaussianScene fd_scene(Rng& rng, int n, int degree = 2,
                              double t_max = 2.0);

// Sequential brute-force blender: global (z, index) sort, per pixel loops
// every splat, same contribution contract as the tiled renderer.
raster::RenderOutput ref_render(const gauss::GaussianScene& scene, double t,
                                const geom::Pose& ego_pose,
                                const geom::CameraModel& cam,
                                const raster::RasterConfig& cfg);

struct FdReport {
  double max_rel = 0;    // worst relative error among entries above the floor
  double max_abs = 0;
  size_t checked = 0;
  size_t failed = 0;
  std::string worst;
};

// Central finite differences of f over every scene parameter vs the analytic
// gradient; an entry fails when |a - fd| > max(rtol*|fd|, floor).
FdReport fd_compare(const std::function<double(const gauss::GaussianScene&)>& f,
                    const gauss::GaussianScene& base,
                    const gauss::SceneGrads& analytic, double h, double rtol,
                    double floor);

double max_image_diff(const Image& a, const Image& b);

}  // namespace testsup
