#include "splat4d/trajgen.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "splat4d/rng.hpp"

namespace splat4d::trajgen {
namespace {

bool on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  double cross = (p.x() - a.x()) * (b.y() - a.y()) - (p.y() - a.y()) * (b.x() - a.x());
  if (cross != 0) return false;
  return p.x() >= std::min(a.x(), b.x()) && p.x() <= std::max(a.x(), b.x()) &&
         p.y() >= std::min(a.y(), b.y()) && p.y() <= std::max(a.y(), b.y());
}

// crossing-number test with an exact boundary check so edges count inside
bool inside_polygon(const Vec2& p, const std::vector<Vec2>& poly) {
  size_t n = poly.size();
  if (n < 3) return false;
  for (size_t i = 0; i < n; ++i) {
    if (on_segment(p, poly[i], poly[(i + 1) % n])) return true;
  }
  bool in = false;
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) &&
        p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x())
      in = !in;
  }
  return in;
}

double tangent_heading(const std::vector<Vec3>& pts, size_t i, double prev) {
  size_t n = pts.size();
  Vec3 d;
  if (n < 2) return prev;
  if (i == 0)
    d = pts[1] - pts[0];
  else if (i + 1 == n)
    d = pts[n - 1] - pts[n - 2];
  else
    d = pts[i + 1] - pts[i - 1];
  if (d.head<2>().norm() < 1e-12) return prev;
  return std::atan2(d.y(), d.x());
}

}  // namespace

SafetyContext safety_context(const worldgen::WorldScene& world) {
  SafetyContext ctx;
  ctx.drivable_area = world.drivable_area;
  ctx.agent_positions.resize(world.timestamps.size());
  for (const auto& [id, track] : world.agents) {
    for (size_t k = 0; k < track.size() && k < ctx.agent_positions.size(); ++k)
      ctx.agent_positions[k].emplace_back(id, track[k].center.head<2>());
  }
  return ctx;
}

bool safe_check(const Vec2& p, size_t frame_idx, const SafetyContext& ctx) {
  if (!inside_polygon(p, ctx.drivable_area)) return false;
  if (frame_idx >= ctx.agent_positions.size()) return true;
  for (const auto& [id, o] : ctx.agent_positions[frame_idx]) {
    (void)id;
    if ((p - o).norm() < ctx.d_min) return false;
  }
  return true;
}

geom::Trajectory propose_lane_change(const geom::Trajectory& traj_ego,
                                     const SafetyContext& ctx,
                                     double max_offset_init, uint64_t seed) {
  if (traj_ego.frame_id != "ego_start")
    throw std::invalid_argument("propose_lane_change: trajectory frame must be ego_start");
  if (traj_ego.size() == 0)
    throw std::invalid_argument("propose_lane_change: empty trajectory");
  if (traj_ego.poses[0].p.norm() > 1e-9)
    throw std::invalid_argument("propose_lane_change: trajectory must start at the origin");

  if (!safe_check(Vec2{0, 0}, 0, ctx))
    throw std::runtime_error("propose_lane_change: no safe candidate at frame 0");

  Rng rng(seed);
  std::vector<Vec3> pts;
  pts.reserve(traj_ego.size());
  pts.push_back(Vec3{0, 0, 0});
  double offset = 0;
  for (size_t i = 1; i < traj_ego.size(); ++i) {
    const Vec3& p = traj_ego.poses[i].p;
    double max_offset = max_offset_init;
    bool accepted = false;
    for (int tries = 0; tries <= 32; ++tries) {
      double new_offset = offset + rng.uniform(0, max_offset);
      Vec3 cand = p + Vec3{0, new_offset, 0};
      if (safe_check(cand.head<2>(), i, ctx)) {
        pts.push_back(cand);
        offset = new_offset;
        accepted = true;
        break;
      }
      max_offset *= 0.5;
    }
    if (!accepted)
      throw std::runtime_error("propose_lane_change: no safe candidate at frame " +
                               std::to_string(i));
  }

  geom::Trajectory out;
  out.frame_id = "ego_start";
  out.t = traj_ego.t;
  out.poses.resize(pts.size());
  double heading = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    heading = tangent_heading(pts, i, heading);
    out.poses[i] = geom::pose_from_yaw(heading, pts[i]);
  }
  return out;
}

geom::Trajectory propose_speed_change(const geom::Trajectory& traj_ego,
                                      double factor) {
  if (!(factor > 0))
    throw std::invalid_argument("propose_speed_change: factor must be > 0");
  geom::Trajectory out = traj_ego;
  if (out.size() == 0) return out;
  double x0 = traj_ego.poses[0].p.x();
  for (auto& pose : out.poses) pose.p.x() = x0 + factor * (pose.p.x() - x0);
  return out;
}

std::vector<ConditionFrame> build_conditions(const geom::Trajectory& novel_traj,
                                             const worldgen::WorldScene& world,
                                             const geom::CameraModel& cam) {
  geom::Trajectory traj = worldgen::to_scene_frame(world, novel_traj);
  if (traj.size() != world.timestamps.size())
    throw std::invalid_argument("build_conditions: trajectory frame count differs from world");
  for (size_t k = 0; k < traj.size(); ++k) {
    if (std::fabs(traj.t[k] - world.timestamps[k]) > 1e-9)
      throw std::invalid_argument("build_conditions: timestamp mismatch at frame " +
                                  std::to_string(k));
  }

  std::vector<ConditionFrame> out(traj.size());
  for (size_t k = 0; k < traj.size(); ++k) {
    out[k].timestamp = traj.t[k];
    for (const auto& [id, track] : world.agents) {
      (void)id;
      if (auto b = geom::project_box(track[k], traj.poses[k], cam))
        out[k].boxes2d.push_back(*b);
    }
    for (const auto& lane : world.lanes) {
      auto segs = geom::project_polyline(lane.pts, traj.poses[k], cam);
      out[k].lanes2d.insert(out[k].lanes2d.end(), segs.begin(), segs.end());
    }
  }
  return out;
}

}  // namespace splat4d::trajgen
