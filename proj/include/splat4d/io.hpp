#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splat4d/geom.hpp"
#include "splat4d/metrics.hpp"
#include "splat4d/scene.hpp"
#include "splat4d/training.hpp"
#include "splat4d/trajgen.hpp"
#include "splat4d/worldgen.hpp"

// Persistence for everything the command line reads or writes. Every writer
// goes through write_file_atomic, so interrupted runs never leave a partial
// file under its final name.
namespace splat4d::io {

// {"frame_id": "...", "frames": [{"t":0.0,"q":[w,x,y,z],"p":[x,y,z]}, ...]}
void save_trajectory(const std::string& path, const geom::Trajectory& traj);
geom::Trajectory load_trajectory(const std::string& path);

// {"fx","fy","cx","cy","w","h","near_clip","ego_to_camera":{"q","p"}}
void save_camera(const std::string& path, const geom::CameraModel& cam);
geom::CameraModel load_camera(const std::string& path);

// Binary checkpoint: little-endian header (magic "SP4D", u32 version, u64
// count, u32 degree, f64 t0), then per primitive the f32 fields in
// declaration order (position, opacity logit, log scale, rotation, color
// logit), an i32 agent id, and the temporal coefficients dim-major,
// degree-minor. A "<path>.json" sidecar carries time_range and the seed.
void save_checkpoint(const std::string& path,
                     const gauss::GaussianScene& scene, uint64_t seed);
gauss::GaussianScene load_checkpoint(const std::string& path);

std::string scene_config_to_json(const worldgen::SceneConfig& cfg);
worldgen::SceneConfig scene_config_from_json(const std::string& text);

// world dir layout: world.sp4d (+sidecar) and world_meta.json holding agent
// tracks, lanes, drivable polygon, timestamps, ego trajectory, and M0
void save_world(const std::string& dir, const worldgen::WorldScene& world,
                uint64_t seed);
worldgen::WorldScene load_world(const std::string& dir);

// one line per frame:
// {"t":...,"boxes":[{"id":1,"min":[u,v],"max":[u,v]}],"lanes":[[[u,v],[u,v]],...]}
void save_conditions(const std::string& path,
                     const std::vector<trajgen::ConditionFrame>& frames);
std::vector<trajgen::ConditionFrame> load_conditions(const std::string& path);

// header row "step,loss_ori,loss_novel,loss_reg,total"
void save_loss_csv(const std::string& path,
                   const std::vector<train::StepLog>& log);

void save_report_json(const std::string& path,
                      const metrics::EvalReport& report);
metrics::EvalReport load_report_json(const std::string& path);
// per-frame table "frame,nta,nta_vacuous,ntl,psnr" (psnr blank when absent)
void save_report_csv(const std::string& path,
                     const metrics::EvalReport& report);

// "lane_change", "accel:F", or "decel:F" with F > 0
struct Maneuver {
  std::string kind;     // "lane_change" | "accel" | "decel"
  double factor = 1.0;  // speed maneuvers only
};
Maneuver parse_maneuver(const std::string& text);
// filesystem-safe tag, e.g. "accel_1.5"
std::string maneuver_tag(const Maneuver& m);

struct ExperimentConfig {
  worldgen::SceneConfig scene;
  std::vector<Maneuver> maneuvers;
  worldgen::DegradeSpec degrade;
  train::TrainConfig train;  // base settings; mode decides cdts_enabled
  uint64_t seed = 7;
};
std::string experiment_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const std::string& text);

// partial JSON: absent keys keep the defaults
train::TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const train::TrainConfig& cfg);

}  // namespace splat4d::io
