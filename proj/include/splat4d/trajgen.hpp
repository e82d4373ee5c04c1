#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "splat4d/geom.hpp"
#include "splat4d/worldgen.hpp"

namespace splat4d::trajgen {

using geom::Vec2;
using geom::Vec3;

// Everything a waypoint must respect: stay inside the drivable polygon
// (boundary inclusive) and keep d_min clearance to every agent of its frame.
struct SafetyContext {
  std::vector<Vec2> drivable_area;  // simple polygon, ego_start ground plane
  // per frame: (agent_id, ground position); frames past the end are empty
  std::vector<std::vector<std::pair<int, Vec2>>> agent_positions;
  double d_min = 2.0;
};

// Context matching the world's own frames: its drivable polygon plus the
// agent box centers at every timestamp.
SafetyContext safety_context(const worldgen::WorldScene& world);

// Structured supervision for one frame seen from a novel camera pose.
struct ConditionFrame {
  double timestamp = 0;
  std::vector<geom::Box2D> boxes2d;
  std::vector<std::array<Vec2, 2>> lanes2d;  // pixel segments
};

bool safe_check(const Vec2& p, size_t frame_idx, const SafetyContext& ctx);

// Random lateral drift, one frame at a time: each frame draws an offset
// increment from uniform(0, max_offset) with max_offset reset to
// max_offset_init and halved after every unsafe candidate; the accepted
// offset carries over, so offsets never decrease. Output starts at the
// origin, headings come from finite-difference tangents. The input must be
// an ego_start trajectory whose first point is the origin. Throws
// std::runtime_error naming the frame when 32 halvings still find no safe
// candidate (or when the origin itself is unsafe).
geom::Trajectory propose_lane_change(const geom::Trajectory& traj_ego,
                                     const SafetyContext& ctx,
                                     double max_offset_init, uint64_t seed);

// Scales cumulative forward displacement: x[i] -> x[0] + factor*(x[i]-x[0]).
// y, z, timestamps and orientations are untouched, so factor 1 is the
// identity. Throws std::invalid_argument unless factor > 0.
geom::Trajectory propose_speed_change(const geom::Trajectory& traj_ego,
                                      double factor);

// Projects the world's agent boxes and lane polylines into the camera at
// every pose of novel_traj ("world" or "ego_start" frame). Throws
// std::invalid_argument when the trajectory timestamps do not match the
// world's.
std::vector<ConditionFrame> build_conditions(const geom::Trajectory& novel_traj,
                                             const worldgen::WorldScene& world,
                                             const geom::CameraModel& cam);

}  // namespace splat4d::trajgen
