#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "splat4d/worldgen.hpp"
#include "support/helpers.hpp"

using namespace splat4d;
using geom::Vec2;
using geom::Vec3;

namespace {

worldgen::SceneConfig small_config(const std::string& kind = "straight") {
  worldgen::SceneConfig c;
  c.kind = kind;
  c.lanes = 2;
  c.agents = 3;
  c.frames = 10;
  c.hz = 10;
  return c;
}

bool scene_equal(const gauss::GaussianScene& a, const gauss::GaussianScene& b) {
  return a.pos == b.pos && a.opacity == b.opacity && a.log_scale == b.log_scale &&
         a.rot == b.rot && a.color == b.color && a.dpos == b.dpos &&
         a.dopacity == b.dopacity && a.dscale == b.dscale && a.drot == b.drot &&
         a.dcolor == b.dcolor && a.agent_id == b.agent_id;
}

bool in_box(const geom::Box3D& b, const Vec3& p) {
  Vec3 d = p - b.center;
  double c = std::cos(b.heading), s = std::sin(b.heading);
  double bx = c * d.x() + s * d.y();
  double by = -s * d.x() + c * d.y();
  return std::fabs(bx) <= 0.5 * b.size.x() && std::fabs(by) <= 0.5 * b.size.y() &&
         std::fabs(d.z()) <= 0.5 * b.size.z();
}

bool in_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
  bool inside = false;
  for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2 &a = poly[i], &b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) &&
        p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x())
      inside = !inside;
  }
  return inside;
}

double dist_to_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
  if (in_polygon(poly, p)) return 0;
  double best = 1e300;
  for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    Vec2 a = poly[j], b = poly[i];
    Vec2 ab = b - a;
    double t = ab.squaredNorm() > 0 ? (p - a).dot(ab) / ab.squaredNorm() : 0.0;
    t = std::min(1.0, std::max(0.0, t));
    best = std::min(best, (p - (a + t * ab)).norm());
  }
  return best;
}

}  // namespace

TEST_CASE("synthesis determinism and config validation") {
  auto cfg = small_config();
  auto a = worldgen::synth_scene(cfg, 11);
  auto b = worldgen::synth_scene(cfg, 11);
  CHECK(scene_equal(a.gt_scene, b.gt_scene));
  CHECK(a.timestamps == b.timestamps);
  CHECK(a.drivable_area.size() == b.drivable_area.size());
  CHECK((a.M0.q - b.M0.q).norm() == 0.0);
  CHECK((a.M0.p - b.M0.p).norm() == 0.0);
  REQUIRE(a.agents.size() == 3);
  for (const auto& [id, track] : a.agents) {
    REQUIRE(track.size() == a.timestamps.size());
    for (size_t k = 0; k < track.size(); ++k) {
      CHECK((track[k].center - b.agents.at(id)[k].center).norm() == 0.0);
      CHECK(track[k].heading == b.agents.at(id)[k].heading);
    }
  }
  auto c = worldgen::synth_scene(cfg, 12);
  CHECK_FALSE(scene_equal(a.gt_scene, c.gt_scene));

  auto bad = cfg;
  bad.kind = "zigzag";
  CHECK_THROWS_AS(worldgen::synth_scene(bad, 1), std::invalid_argument);
  bad = cfg;
  bad.lanes = 0;
  CHECK_THROWS_AS(worldgen::synth_scene(bad, 1), std::invalid_argument);
  bad = cfg;
  bad.frames = 1;
  CHECK_THROWS_AS(worldgen::synth_scene(bad, 1), std::invalid_argument);
  bad = cfg;
  bad.agents = -1;
  CHECK_THROWS_AS(worldgen::synth_scene(bad, 1), std::invalid_argument);
  bad = cfg;
  bad.hz = 0;
  CHECK_THROWS_AS(worldgen::synth_scene(bad, 1), std::invalid_argument);
}

TEST_CASE("zero agents leaves only background") {
  auto cfg = small_config();
  cfg.agents = 0;
  auto w = worldgen::synth_scene(cfg, 3);
  CHECK(w.agents.empty());
  for (int id : w.gt_scene.agent_id) CHECK(id == 0);
}

TEST_CASE("lane markings sit on lane boundaries") {
  auto cfg = small_config();
  auto w = worldgen::synth_scene(cfg, 5);
  REQUIRE(w.lanes.size() == 3);  // 2 lanes -> 3 boundaries
  // ego lane center is y = 0, second lane center y = 3.5
  std::vector<double> centers{0.0, 3.5};
  std::set<double> seen;
  for (const auto& line : w.lanes) {
    REQUIRE(line.pts.size() > 10);
    double y0 = line.pts.front().y();
    double nearest = 1e300;
    for (const Vec3& p : line.pts) {
      CHECK(p.y() == doctest::Approx(y0).epsilon(1e-12));  // straight road
      CHECK(p.z() == 0.0);
    }
    for (double c : centers) nearest = std::min(nearest, std::fabs(y0 - c));
    CHECK(nearest == doctest::Approx(1.75).epsilon(1e-12));
    seen.insert(std::round(y0 * 100) / 100);
    CHECK(line.color.minCoeff() >= 0.75);
  }
  CHECK(seen == std::set<double>{-1.75, 1.75, 5.25});
}

TEST_CASE("agent boxes track their primitives") {
  for (const char* kind : {"straight", "arc"}) {
    auto w = worldgen::synth_scene(small_config(kind), 17);
    for (const auto& [id, track] : w.agents) {
      size_t nprim = 0;
      for (int a : w.gt_scene.agent_id)
        if (a == id) ++nprim;
      CHECK(nprim >= 200);
      for (size_t k = 0; k < w.timestamps.size(); ++k) {
        int contained = 0;
        for (size_t i = 0; i < w.gt_scene.size(); ++i) {
          if (w.gt_scene.agent_id[i] != id) continue;
          auto d = gauss::deform(w.gt_scene, i, w.timestamps[k]);
          if (in_box(track[k], d.position)) ++contained;
        }
        CHECK(contained >= 1);
      }
    }
  }
}

TEST_CASE("lanes hug the drivable area") {
  for (const char* kind : {"straight", "arc"}) {
    auto w = worldgen::synth_scene(small_config(kind), 23);
    REQUIRE(w.drivable_area.size() >= 4);
    for (const auto& line : w.lanes)
      for (const Vec3& p : line.pts)
        CHECK(dist_to_polygon(w.drivable_area, p.head<2>()) <= 0.5);
    // the ego path itself stays drivable
    auto tr = worldgen::to_scene_frame(w, w.ego_traj);
    for (const auto& P : tr.poses)
      CHECK(in_polygon(w.drivable_area, P.p.head<2>()));
  }
}

TEST_CASE("world trajectory round trips through M0") {
  auto w = worldgen::synth_scene(small_config(), 29);
  CHECK(w.ego_traj.frame_id == "world");
  auto tr = worldgen::to_scene_frame(w, w.ego_traj);
  CHECK(tr.frame_id == "ego_start");
  CHECK(tr.poses[0].p.norm() < 1e-9);
  CHECK(std::fabs(tr.poses[0].q[0]) == doctest::Approx(1.0).epsilon(1e-12));
  // M0 is non-trivial so world and scene frames genuinely differ
  CHECK(w.ego_traj.poses[0].p.norm() > 1.0);

  geom::Trajectory odd = w.ego_traj;
  odd.frame_id = "map";
  CHECK_THROWS_AS(worldgen::to_scene_frame(w, odd), std::invalid_argument);
}

TEST_CASE("oracle render matches raw rendering without degradation") {
  auto w = worldgen::synth_scene(small_config(), 31);
  auto cam = testsup::drive_camera();
  auto tr = worldgen::to_scene_frame(w, w.ego_traj);
  geom::Trajectory sub;
  sub.frame_id = tr.frame_id;
  for (size_t k = 0; k < 3; ++k) {
    sub.t.push_back(tr.t[k]);
    sub.poses.push_back(tr.poses[k]);
  }
  auto plain = worldgen::oracle_render(w, sub, cam, std::nullopt);
  auto video = raster::render_video(w.gt_scene, sub, cam);
  REQUIRE(plain.size() == 3);
  for (size_t k = 0; k < 3; ++k)
    CHECK(testsup::max_image_diff(plain[k], video[k].image) == 0.0);

  worldgen::DegradeSpec zero{0, 0, 9};
  auto degraded_zero = worldgen::oracle_render(w, sub, cam, zero);
  for (size_t k = 0; k < 3; ++k)
    CHECK(testsup::max_image_diff(plain[k], degraded_zero[k]) == 0.0);

  // world-frame input renders identically to its ego_start form
  geom::Trajectory sub_world;
  sub_world.frame_id = "world";
  for (size_t k = 0; k < 3; ++k) {
    sub_world.t.push_back(w.ego_traj.t[k]);
    sub_world.poses.push_back(w.ego_traj.poses[k]);
  }
  auto from_world = worldgen::oracle_render(w, sub_world, cam, std::nullopt);
  for (size_t k = 0; k < 3; ++k) {
    double d = testsup::max_image_diff(plain[k], from_world[k]);
    CHECK(d < 1e-9);
  }

  worldgen::DegradeSpec bad{-1, 0, 0};
  CHECK_THROWS_AS(worldgen::oracle_render(w, sub, cam, bad), std::invalid_argument);
}

TEST_CASE("degradation noise statistics") {
  auto w = worldgen::synth_scene(small_config(), 37);
  auto cam = testsup::drive_camera();
  auto tr = worldgen::to_scene_frame(w, w.ego_traj);
  geom::Trajectory sub;
  sub.frame_id = tr.frame_id;
  for (size_t k = 0; k < 4; ++k) {
    sub.t.push_back(tr.t[k]);
    sub.poses.push_back(tr.poses[k]);
  }
  auto clean = worldgen::oracle_render(w, sub, cam, std::nullopt);
  worldgen::DegradeSpec spec{0, 0.02, 123};
  auto noisy = worldgen::oracle_render(w, sub, cam, spec);

  double sum = 0, sum2 = 0;
  size_t n = 0;
  for (size_t k = 0; k < clean.size(); ++k)
    for (size_t i = 0; i < clean[k].data.size(); ++i) {
      double c = clean[k].data[i];
      if (c < 0.1 || c > 0.9) continue;  // away from the clamp
      double d = noisy[k].data[i] - c;
      sum += d;
      sum2 += d * d;
      ++n;
    }
  REQUIRE(n > 20000);
  double mean = sum / n;
  double sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::fabs(mean) < 0.002);
  CHECK(sd == doctest::Approx(0.02).epsilon(0.1));

  // determinism and actual change
  auto noisy2 = worldgen::oracle_render(w, sub, cam, spec);
  for (size_t k = 0; k < clean.size(); ++k) {
    CHECK(testsup::max_image_diff(noisy[k], noisy2[k]) == 0.0);
    CHECK(testsup::max_image_diff(noisy[k], clean[k]) > 0.0);
  }

  // blur changes the image and is applied before noise
  worldgen::DegradeSpec blur_only{1.0, 0, 123};
  auto blurred = worldgen::oracle_render(w, sub, cam, blur_only);
  CHECK(testsup::max_image_diff(blurred[0], clean[0]) > 0.0);
  worldgen::DegradeSpec both{1.0, 0.02, 123};
  auto degraded = worldgen::oracle_render(w, sub, cam, both);
  // noise stream identical, so degraded - blurred == noisy - clean at
  // pixels where neither side clamped
  size_t agree = 0, tested = 0;
  for (size_t i = 0; i < clean[0].data.size(); ++i) {
    double a = degraded[0].data[i] - blurred[0].data[i];
    double b = noisy[0].data[i] - clean[0].data[i];
    double cb = blurred[0].data[i], cc = clean[0].data[i];
    if (cb < 0.1 || cb > 0.9 || cc < 0.1 || cc > 0.9) continue;
    ++tested;
    if (std::fabs(a - b) < 1e-12) ++agree;
  }
  REQUIRE(tested > 1000);
  CHECK(agree == tested);
}

TEST_CASE("lidar depth masking") {
  auto w = worldgen::synth_scene(small_config(), 41);
  auto cam = testsup::drive_camera();
  auto tr = worldgen::to_scene_frame(w, w.ego_traj);
  geom::Trajectory sub;
  sub.frame_id = tr.frame_id;
  for (size_t k = 0; k < 5; ++k) {
    sub.t.push_back(tr.t[k]);
    sub.poses.push_back(tr.poses[k]);
  }
  auto video = raster::render_video(w.gt_scene, sub, cam);

  auto dense = worldgen::lidar_depth(w, sub, cam, 0.0, 7);
  REQUIRE(dense.size() == 5);
  size_t valid = 0;
  for (size_t k = 0; k < 5; ++k)
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        bool on = video[k].alpha.at(x, y, 0) >= 0.5;
        if (on) {
          ++valid;
          CHECK(dense[k].at(x, y, 0) == video[k].depth.at(x, y, 0));
        } else {
          CHECK(dense[k].at(x, y, 0) == 0.0);
        }
      }
  REQUIRE(valid > 5000);

  auto sparse = worldgen::lidar_depth(w, sub, cam, 0.99, 7);
  size_t kept = 0;
  for (const auto& d : sparse)
    for (double v : d.data)
      if (v != 0.0) ++kept;
  double expect = 0.01 * valid;
  double sigma = std::sqrt(valid * 0.01 * 0.99);
  CHECK(std::fabs(kept - expect) <= 3.0 * sigma);

  auto sparse2 = worldgen::lidar_depth(w, sub, cam, 0.99, 7);
  for (size_t k = 0; k < 5; ++k)
    CHECK(testsup::max_image_diff(sparse[k], sparse2[k]) == 0.0);

  CHECK_THROWS_AS(worldgen::lidar_depth(w, sub, cam, 1.0, 7), std::invalid_argument);
  CHECK_THROWS_AS(worldgen::lidar_depth(w, sub, cam, -0.1, 7), std::invalid_argument);

  worldgen::WorldScene empty;
  empty.gt_scene.degree = 2;
  empty.gt_scene.t_max = 1;
  empty.ego_traj.frame_id = "ego_start";
  geom::Trajectory one;
  one.frame_id = "ego_start";
  one.t.push_back(0.0);
  one.poses.push_back(geom::pose_identity());
  empty.M0 = geom::pose_identity();
  auto nothing = worldgen::lidar_depth(empty, one, cam, 0.0, 1);
  for (double v : nothing[0].data) CHECK(v == 0.0);
}

TEST_CASE("projected boxes cover rendered agent mass") {
  auto w = worldgen::synth_scene(small_config(), 43);
  auto cam = testsup::drive_camera();
  auto tr = worldgen::to_scene_frame(w, w.ego_traj);
  auto video = raster::render_video(w.gt_scene, tr, cam);
  size_t checked = 0;
  for (size_t k = 0; k < tr.size(); ++k)
    for (const auto& [id, track] : w.agents) {
      auto it = video[k].agent_weights.find(id);
      if (it == video[k].agent_weights.end()) continue;
      const Image& wmap = it->second;
      double sx = 0, sy = 0, sw = 0;
      for (int y = 0; y < wmap.height; ++y)
        for (int x = 0; x < wmap.width; ++x) {
          double v = wmap.at(x, y, 0);
          sx += v * (x + 0.5);
          sy += v * (y + 0.5);
          sw += v;
        }
      if (sw < 1e-6) continue;
      auto b2 = geom::project_box(track[k], tr.poses[k], cam);
      REQUIRE(b2.has_value());
      double cx = sx / sw, cy = sy / sw;
      CHECK(cx >= b2->lo.x());
      CHECK(cx <= b2->hi.x());
      CHECK(cy >= b2->lo.y());
      CHECK(cy <= b2->hi.y());
      ++checked;
    }
  CHECK(checked >= w.agents.size() * tr.size() / 2);
}

TEST_CASE("learnable initialization draws from the oracle") {
  auto w = worldgen::synth_scene(small_config(), 47);
  auto s = worldgen::init_learnable(w, 500, 0.0, 99);
  REQUIRE(s.size() == 500);
  CHECK(s.degree == w.gt_scene.degree);
  std::set<std::array<double, 3>> oracle;
  for (size_t i = 0; i < w.gt_scene.size(); ++i)
    oracle.insert({w.gt_scene.pos[3 * i], w.gt_scene.pos[3 * i + 1],
                   w.gt_scene.pos[3 * i + 2]});
  for (size_t i = 0; i < s.size(); ++i)
    CHECK(oracle.count({s.pos[3 * i], s.pos[3 * i + 1], s.pos[3 * i + 2]}) == 1);
}
