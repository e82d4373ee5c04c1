#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "splat4d/geom.hpp"
#include "splat4d/image.hpp"
#include "splat4d/raster.hpp"
#include "splat4d/scene.hpp"

namespace splat4d::worldgen {

using geom::Vec2;
using geom::Vec3;

struct SceneConfig {
  std::string kind = "straight";  // "straight" | "arc"
  int lanes = 2;
  int agents = 3;
  int frames = 40;
  double hz = 10.0;
  uint64_t seed = 7;
};

// Post-render degradation standing in for an imperfect video generator:
// Gaussian blur, then additive Gaussian noise clamped to [0,1].
struct DegradeSpec {
  double blur_sigma = 0;   // px
  double noise_sigma = 0;  // channel units
  uint64_t seed = 0;
};

struct Polyline {
  std::vector<Vec3> pts;  // ego_start frame, on the ground plane
  Vec3 color{1, 1, 1};    // rendered marking color (near-white)
};

// Ground-truth synthetic world. The Gaussian scene lives in the ego_start
// frame and is never trained; agent boxes are per-frame tracks aligned with
// `timestamps`; the drivable area is a simple polygon on z = 0.
struct WorldScene {
  gauss::GaussianScene gt_scene;
  std::vector<double> timestamps;
  std::map<int, std::vector<geom::Box3D>> agents;
  std::vector<Polyline> lanes;
  std::vector<Vec2> drivable_area;
  geom::Trajectory ego_traj;  // frame_id "world"
  geom::Pose M0;              // world pose of the trajectory start
};

// Deterministic scene synthesis: straight or arc road with 3.5 m lanes,
// scripted lane-keeping / crossing agents of >= 200 saturated-color
// primitives each, near-white lane marking chains, ground and backdrop fill.
// Throws std::invalid_argument on a bad config.
WorldScene synth_scene(const SceneConfig& config, uint64_t seed);

// Renders gt_scene along traj (frame_id "world" is re-expressed through M0,
// "ego_start" is used as is) and applies the degradation when given.
std::vector<Image> oracle_render(const WorldScene& world,
                                 const geom::Trajectory& traj,
                                 const geom::CameraModel& cam,
                                 const std::optional<DegradeSpec>& degrade,
                                 const raster::RasterConfig& rcfg = {});

// Oracle depth where alpha >= 0.5, with a seeded mask keeping a (1 - dropout)
// fraction of those pixels; everything else is 0.
std::vector<Image> lidar_depth(const WorldScene& world,
                               const geom::Trajectory& traj,
                               const geom::CameraModel& cam, double dropout,
                               uint64_t seed,
                               const raster::RasterConfig& rcfg = {});

// Subsample-and-perturb initialization from the world's ground-truth scene.
gauss::GaussianScene init_learnable(const WorldScene& world, size_t count,
                                    double noise_sigma, uint64_t seed);

// Trajectory re-expressed in the gt_scene frame; accepts "world" (converted
// through M0) or "ego_start" (returned unchanged).
geom::Trajectory to_scene_frame(const WorldScene& world,
                                const geom::Trajectory& traj);

}  // namespace splat4d::worldgen
