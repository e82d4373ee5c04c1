#include "splat4d/worldgen.hpp"

#include <cmath>
#include <stdexcept>

#include "splat4d/rng.hpp"

namespace splat4d::worldgen {
namespace {

constexpr double kLaneWidth = 3.5;
constexpr double kEgoSpeed = 8.0;
constexpr double kArcRadius = 80.0;  // ego lane circle

double logit(double p) {
  p = std::min(0.98, std::max(0.02, p));
  return std::log(p / (1.0 - p));
}

Vec3 logit3(const Vec3& p) { return Vec3{logit(p.x()), logit(p.y()), logit(p.z())}; }

Vec3 hue_color(double h) {
  h -= std::floor(h);
  double x = 1.0 - std::fabs(std::fmod(h * 6.0, 2.0) - 1.0);
  switch (static_cast<int>(h * 6.0) % 6) {
    case 0: return Vec3{1, x, 0};
    case 1: return Vec3{x, 1, 0};
    case 2: return Vec3{0, 1, x};
    case 3: return Vec3{0, x, 1};
    case 4: return Vec3{x, 0, 1};
    default: return Vec3{1, 0, x};
  }
}

struct RoadFrame {
  Vec3 pos;
  double heading;
};

// u is arclength along the ego lane center, lat the leftward offset from it.
struct RoadModel {
  bool arc = false;
  RoadFrame at(double u, double lat) const {
    if (!arc) return {Vec3{u, lat, 0}, 0.0};
    double th = u / kArcRadius;
    double r = kArcRadius - lat;
    return {Vec3{r * std::sin(th), kArcRadius - r * std::cos(th), 0}, th};
  }
};

geom::Vec4 yaw_quat(double yaw) {
  return geom::Vec4{std::cos(0.5 * yaw), 0, 0, std::sin(0.5 * yaw)};
}

void add_prim(gauss::GaussianScene& s, const Vec3& pos, const Vec3& scale,
              double yaw, const Vec3& color, double opacity, int agent = 0) {
  gauss::GaussianPrimitive g;
  g.position = pos;
  g.log_scale = Vec3{std::log(scale.x()), std::log(scale.y()), std::log(scale.z())};
  g.rotation = yaw_quat(yaw);
  g.color_logit = logit3(color);
  g.opacity_logit = opacity;
  g.agent_id = agent;
  g.temporal = gauss::TemporalCoeffs::zero(s.degree);
  s.add(g);
}

struct AgentScript {
  Vec3 c0{0, 0, 0};                       // box center at t = 0
  Vec3 vel{0, 0, 0}, acc{0, 0, 0};        // quadratic center motion
  double heading0 = 0, omega = 0;
  Vec3 size{1, 1, 1};
  int id = 0;
  int nx = 5, ny = 5, nz = 8;
  double blob_scale = 0.2;
  double edge_inset = 0.2;
};

void add_agent(gauss::GaussianScene& s, const AgentScript& a, Rng& rng) {
  Eigen::Matrix3d R0 = geom::rotation_matrix(geom::pose_from_yaw(a.heading0, Vec3::Zero()));
  Vec3 zhat{0, 0, 1};
  Vec3 color = hue_color(0.618033988749895 * a.id);
  // the blob grid stops edge_inset short of the box faces so the rendered
  // tail (detection threshold 0.3) lands on the face itself, making the
  // detected footprint agree with the projected box
  Vec3 half = 0.5 * a.size - Vec3::Constant(a.edge_inset);
  auto emit = [&](const Vec3& body, double jitter) {
    Vec3 u = body;
    if (jitter > 0)
      u += Vec3{rng.uniform(-jitter, jitter), rng.uniform(-jitter, jitter),
                rng.uniform(-jitter, jitter)};
    Vec3 world_off = R0 * u;
    gauss::GaussianPrimitive g;
    g.position = a.c0 + world_off;
    double sc = a.blob_scale;
    g.log_scale = Vec3{std::log(sc), std::log(sc), std::log(sc)};
    g.rotation = yaw_quat(a.heading0);
    g.color_logit = logit3(color);
    g.opacity_logit = 3.0;
    g.agent_id = a.id;
    g.temporal = gauss::TemporalCoeffs::zero(s.degree);
    Vec3 v = a.vel + a.omega * zhat.cross(world_off);
    Vec3 ac = a.acc + a.omega * a.omega * zhat.cross(zhat.cross(world_off));
    g.temporal.dpos.col(0) = v;
    if (s.degree >= 2) g.temporal.dpos.col(1) = 0.5 * ac;
    s.add(g);
  };
  emit(Vec3::Zero(), 0);  // exact center, inside the box at every timestamp
  for (int ix = 0; ix < a.nx; ++ix)
    for (int iy = 0; iy < a.ny; ++iy)
      for (int iz = 0; iz < a.nz; ++iz) {
        Vec3 f{a.nx > 1 ? ix / (a.nx - 1.0) * 2 - 1 : 0.0,
               a.ny > 1 ? iy / (a.ny - 1.0) * 2 - 1 : 0.0,
               a.nz > 1 ? iz / (a.nz - 1.0) * 2 - 1 : 0.0};
        emit(f.cwiseProduct(half), 0.01);
      }
}

std::vector<geom::Box3D> agent_track(const AgentScript& a,
                                     const std::vector<double>& ts) {
  std::vector<geom::Box3D> track;
  track.reserve(ts.size());
  for (double t : ts) {
    geom::Box3D b;
    b.center = a.c0 + a.vel * t + 0.5 * a.acc * t * t;
    b.size = a.size;
    b.heading = a.heading0 + a.omega * t;
    b.agent_id = a.id;
    track.push_back(b);
  }
  return track;
}

}  // namespace

WorldScene synth_scene(const SceneConfig& config, uint64_t seed) {
  if (config.kind != "straight" && config.kind != "arc")
    throw std::invalid_argument("synth_scene: kind must be straight or arc");
  if (config.lanes < 1) throw std::invalid_argument("synth_scene: lanes must be >= 1");
  if (config.agents < 0) throw std::invalid_argument("synth_scene: agents must be >= 0");
  if (config.frames < 2) throw std::invalid_argument("synth_scene: frames must be >= 2");
  if (config.hz <= 0) throw std::invalid_argument("synth_scene: hz must be positive");

  Rng rng(seed);
  RoadModel road{config.kind == "arc"};
  const int L = config.lanes, K = config.frames;
  const double dt = 1.0 / config.hz;
  const double t_end = (K - 1) * dt;
  const double u_end = kEgoSpeed * t_end;
  const double lat_lo = -0.5 * kLaneWidth;         // ego drives lane 0
  const double lat_hi = (L - 0.5) * kLaneWidth;

  WorldScene w;
  w.gt_scene.degree = 2;
  w.gt_scene.t0 = 0;
  w.gt_scene.t_min = 0;
  w.gt_scene.t_max = t_end;
  for (int k = 0; k < K; ++k) w.timestamps.push_back(k * dt);

  // lane boundary markings first: bright stripes on the ground layer, with
  // polyline metadata; earlier index wins depth ties against the asphalt
  const Vec3 kMarkColor{0.99, 0.99, 0.97};
  const double u_far = u_end + 16;
  for (int b = 0; b <= L; ++b) {
    double lat = b * kLaneWidth - 0.5 * kLaneWidth;
    for (double u = -8; u <= u_far; u += 1.0) {
      RoadFrame f = road.at(u, lat);
      add_prim(w.gt_scene, f.pos + Vec3{0, 0, 0.02}, Vec3{0.75, 0.13, 0.02},
               f.heading, kMarkColor, 8.0);
    }
    Polyline line;
    line.color = kMarkColor;
    for (double u = -8; u <= u_far; u += 2.0) line.pts.push_back(road.at(u, lat).pos);
    w.lanes.push_back(std::move(line));
  }

  // ground carpet, asphalt over the road band and grass outside it, carved
  // away near the boundary stripes so nothing hazes them over
  for (double u = -8; u <= u_far; u += 1.2)
    for (double lat = lat_lo - 10; lat <= lat_hi + 10; lat += 1.2) {
      double latj = lat + rng.uniform(-0.25, 0.25);
      double uj = u + rng.uniform(-0.25, 0.25);
      double to_stripe = 1e300;
      for (int b = 0; b <= L; ++b)
        to_stripe = std::min(to_stripe,
                             std::fabs(latj - (b * kLaneWidth - 0.5 * kLaneWidth)));
      if (to_stripe < 1.8) continue;
      RoadFrame f = road.at(uj, latj);
      Vec3 col;
      if (lat >= lat_lo && lat <= lat_hi) {
        double g = 0.30 + rng.uniform(-0.04, 0.04);
        col = Vec3{g, g, g};
      } else {
        col = Vec3{0.23 + rng.uniform(-0.05, 0.05), 0.42 + rng.uniform(-0.05, 0.05),
                   0.20 + rng.uniform(-0.05, 0.05)};
      }
      add_prim(w.gt_scene, f.pos, Vec3{0.5, 0.5, 0.02}, f.heading, col, 2.5);
    }

  // backdrop rows flanking the road
  for (int side : {-1, 1})
    for (double u = -5; u <= u_end + 50; u += 3.0) {
      double lat = side < 0 ? lat_lo - rng.uniform(4, 8) : lat_hi + rng.uniform(4, 8);
      RoadFrame f = road.at(u, lat);
      Vec3 pos = f.pos + Vec3{0, 0, rng.uniform(1.0, 3.5)};
      double sc = rng.uniform(0.8, 1.8);
      Vec3 col{rng.uniform(0.15, 0.65), rng.uniform(0.15, 0.65), rng.uniform(0.15, 0.65)};
      add_prim(w.gt_scene, pos, Vec3{sc, sc, sc}, 0, col, 2.5);
    }

  // distant wall closing off the corridor
  for (double lat = lat_lo - 20; lat <= lat_hi + 20; lat += 2.5)
    for (double z : {1.2, 4.0, 7.0}) {
      RoadFrame f = road.at(u_end + 42, lat);
      Vec3 col{0.30 + rng.uniform(-0.05, 0.05), 0.35 + rng.uniform(-0.05, 0.05),
               0.45 + rng.uniform(-0.05, 0.05)};
      add_prim(w.gt_scene, f.pos + Vec3{0, 0, z}, Vec3{2.2, 2.2, 2.2}, 0, col, 2.5);
    }

  // scripted agents
  for (int j = 0; j < config.agents; ++j) {
    AgentScript a;
    a.id = j + 1;
    bool crossing = j % 3 == 2;
    if (!crossing) {
      int lane = rng.uniform_int(0, L - 1);
      double lat = lane * kLaneWidth;
      double s0 = rng.uniform(12, 40);
      double v = lane == 0 ? rng.uniform(8.5, 15) : rng.uniform(5, 15);
      RoadFrame f = road.at(s0, lat);
      a.size = Vec3{4.2, 1.8, 1.5};
      a.c0 = f.pos + Vec3{0, 0, 0.75};
      a.heading0 = f.heading;
      Vec3 tangent{std::cos(f.heading), std::sin(f.heading), 0};
      a.vel = v * tangent;
      if (road.arc) {
        double r = kArcRadius - lat;
        a.omega = v / r;
        a.acc = (v * v / r) * Vec3{-std::sin(f.heading), std::cos(f.heading), 0};
      }
      a.nx = 14, a.ny = 6, a.nz = 5;
      a.blob_scale = 0.12;
      a.edge_inset = 0.21;
    } else {
      double u_c = rng.uniform(u_end + 6, u_end + 18);
      int dir = rng.uniform() < 0.5 ? 1 : -1;
      double v = rng.uniform(5, 8);
      double lat0 = dir > 0 ? lat_lo - 2 : lat_hi + 2;
      RoadFrame f = road.at(u_c, lat0);
      Vec3 left{-std::sin(f.heading), std::cos(f.heading), 0};
      a.size = Vec3{1.0, 1.0, 1.8};
      a.c0 = f.pos + Vec3{0, 0, 0.9};
      a.vel = dir * v * left;
      a.heading0 = std::atan2(a.vel.y(), a.vel.x());
      a.nx = 5, a.ny = 5, a.nz = 8;
      a.blob_scale = 0.10;
      a.edge_inset = 0.17;
    }
    add_agent(w.gt_scene, a, rng);
    w.agents.emplace(a.id, agent_track(a, w.timestamps));
  }

  // ego trajectory, expressed in an arbitrary world frame
  w.M0 = geom::pose_from_yaw(rng.uniform(-3.14159, 3.14159),
                             Vec3{rng.uniform(-60, 60), rng.uniform(-60, 60), 0});
  w.ego_traj.frame_id = "world";
  for (int k = 0; k < K; ++k) {
    RoadFrame f = road.at(kEgoSpeed * w.timestamps[k], 0);
    w.ego_traj.t.push_back(w.timestamps[k]);
    w.ego_traj.poses.push_back(
        geom::compose(w.M0, geom::pose_from_yaw(f.heading, f.pos)));
  }

  // drivable band between the outer lane boundaries
  double u_lo = -8, u_hi = std::max(u_end * 1.7, u_far);
  std::vector<double> us;
  for (double u = u_lo; u < u_hi; u += 3.0) us.push_back(u);
  us.push_back(u_hi);
  for (double u : us) w.drivable_area.push_back(road.at(u, lat_lo).pos.head<2>());
  for (size_t i = us.size(); i-- > 0;)
    w.drivable_area.push_back(road.at(us[i], lat_hi).pos.head<2>());

  return w;
}

geom::Trajectory to_scene_frame(const WorldScene& world,
                                const geom::Trajectory& traj) {
  if (traj.frame_id == "ego_start") return traj;
  if (traj.frame_id == "world") return geom::to_ego_start(traj, world.M0);
  throw std::invalid_argument("to_scene_frame: unknown frame '" + traj.frame_id + "'");
}

std::vector<Image> oracle_render(const WorldScene& world,
                                 const geom::Trajectory& traj,
                                 const geom::CameraModel& cam,
                                 const std::optional<DegradeSpec>& degrade,
                                 const raster::RasterConfig& rcfg) {
  if (degrade && (degrade->blur_sigma < 0 || degrade->noise_sigma < 0))
    throw std::invalid_argument("oracle_render: degradation sigmas must be >= 0");
  geom::Trajectory tr = to_scene_frame(world, traj);
  auto frames = raster::render_video(world.gt_scene, tr, cam, rcfg);
  std::vector<Image> out;
  out.reserve(frames.size());
  for (auto& f : frames) out.push_back(std::move(f.image));
  if (!degrade) return out;
  Rng rng(degrade->seed);
  for (Image& im : out) {
    if (degrade->blur_sigma > 0) im = gaussian_blur(im, degrade->blur_sigma);
    if (degrade->noise_sigma > 0)
      for (double& v : im.data)
        v = std::min(1.0, std::max(0.0, v + rng.normal(0, degrade->noise_sigma)));
  }
  return out;
}

std::vector<Image> lidar_depth(const WorldScene& world,
                               const geom::Trajectory& traj,
                               const geom::CameraModel& cam, double dropout,
                               uint64_t seed, const raster::RasterConfig& rcfg) {
  if (dropout < 0 || dropout >= 1)
    throw std::invalid_argument("lidar_depth: dropout must be in [0, 1)");
  geom::Trajectory tr = to_scene_frame(world, traj);
  auto frames = raster::render_video(world.gt_scene, tr, cam, rcfg);
  Rng rng(seed);
  std::vector<Image> out;
  out.reserve(frames.size());
  for (auto& f : frames) {
    Image d = Image::zeros(f.depth.width, f.depth.height, 1);
    for (size_t i = 0; i < d.data.size(); ++i)
      if (f.alpha.data[i] >= 0.5 && rng.uniform() >= dropout)
        d.data[i] = f.depth.data[i];
    out.push_back(std::move(d));
  }
  return out;
}

gauss::GaussianScene init_learnable(const WorldScene& world, size_t count,
                                    double noise_sigma, uint64_t seed) {
  return gauss::init_learnable(world.gt_scene, count, noise_sigma, seed);
}

}  // namespace splat4d::worldgen
