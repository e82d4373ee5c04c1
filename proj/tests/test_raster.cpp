#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "splat4d/image.hpp"
#include "splat4d/raster.hpp"
#include "splat4d/rng.hpp"
#include "splat4d/scene.hpp"
#include "support/helpers.hpp"

using namespace splat4d;
using geom::Vec3;
using geom::Vec4;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

gauss::GaussianScene one_splat(const Vec3& p, double ls, double op_logit,
                               const Vec3& col_logit, int agent = 0) {
  gauss::GaussianScene s;
  s.degree = 2;
  s.t_max = 1;
  gauss::GaussianPrimitive g;
  g.position = p;
  g.log_scale = Vec3{ls, ls, ls};
  g.opacity_logit = op_logit;
  g.color_logit = col_logit;
  g.agent_id = agent;
  g.temporal = gauss::TemporalCoeffs::zero(2);
  s.add(g);
  return s;
}

double grad_linf(const gauss::SceneGrads& g) {
  double m = 0;
  for (const auto* v : {&g.pos, &g.opacity, &g.log_scale, &g.rot, &g.color,
                        &g.dpos, &g.dopacity, &g.dscale, &g.drot, &g.dcolor})
    for (double x : *v) m = std::max(m, std::fabs(x));
  return m;
}

double grads_diff(const gauss::SceneGrads& a, const gauss::SceneGrads& b) {
  gauss::SceneGrads d = a;
  d.accumulate(b, -1.0);
  return grad_linf(d);
}

double output_diff(const raster::RenderOutput& a, const raster::RenderOutput& b) {
  double m = testsup::max_image_diff(a.image, b.image);
  m = std::max(m, testsup::max_image_diff(a.depth, b.depth));
  m = std::max(m, testsup::max_image_diff(a.alpha, b.alpha));
  if (a.agent_weights.size() != b.agent_weights.size()) return 1e300;
  for (const auto& [id, im] : a.agent_weights) {
    auto it = b.agent_weights.find(id);
    if (it == b.agent_weights.end()) return 1e300;
    m = std::max(m, testsup::max_image_diff(im, it->second));
  }
  return m;
}

}  // namespace

TEST_CASE("project_gaussian hand values") {
  auto cam = testsup::eye_camera(100, 100, 100.0);
  gauss::DeformedGaussian g;
  g.position = Vec3{0, 0, 10};
  g.log_scale = Vec3{0, 0, 0};
  g.rotation = Vec4{1, 0, 0, 0};
  g.opacity_logit = 0.3;
  g.color_logit = Vec3{0.5, -0.5, 2.0};
  g.agent_id = 2;
  raster::RasterConfig cfg;
  auto sp = raster::project_gaussian(g, geom::pose_identity(), cam, cfg);
  REQUIRE(sp.has_value());
  CHECK(sp->mean.x() == doctest::Approx(50).epsilon(1e-12));
  CHECK(sp->mean.y() == doctest::Approx(50).epsilon(1e-12));
  CHECK(sp->cov(0, 0) == doctest::Approx(100.3).epsilon(1e-12));
  CHECK(sp->cov(1, 1) == doctest::Approx(100.3).epsilon(1e-12));
  CHECK(sp->cov(0, 1) == doctest::Approx(0).epsilon(1e-12));
  CHECK(sp->z == doctest::Approx(10).epsilon(1e-12));
  CHECK(sp->opacity == doctest::Approx(sigmoid(0.3)).epsilon(1e-12));
  CHECK(sp->color.x() == doctest::Approx(sigmoid(0.5)).epsilon(1e-12));
  CHECK(sp->color.z() == doctest::Approx(sigmoid(2.0)).epsilon(1e-12));
  CHECK(sp->agent_id == 2);

  g.position = Vec3{0, 0, -10};
  CHECK_FALSE(raster::project_gaussian(g, geom::pose_identity(), cam, cfg).has_value());
  g.position = Vec3{0, 0, 0.05};
  CHECK_FALSE(raster::project_gaussian(g, geom::pose_identity(), cam, cfg).has_value());
  // off the image with a small footprint
  g.position = Vec3{5, 0, 5};
  g.log_scale = Vec3{std::log(0.01), std::log(0.01), std::log(0.01)};
  CHECK_FALSE(raster::project_gaussian(g, geom::pose_identity(), cam, cfg).has_value());
}

TEST_CASE("project_gaussian rigid equivariance") {
  auto cam = testsup::eye_camera(64, 64, 60.0);
  Rng rng(51);
  raster::RasterConfig cfg;
  for (int i = 0; i < 40; ++i) {
    gauss::DeformedGaussian g;
    g.position = Vec3{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(5, 12)};
    g.log_scale = Vec3{rng.uniform(-2, -0.5), rng.uniform(-2, -0.5), rng.uniform(-2, -0.5)};
    Vec4 q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    g.rotation = geom::quat_normalize(q);
    g.opacity_logit = rng.uniform(-1, 1);
    g.color_logit = Vec3{0, 0, 0};
    g.agent_id = 1;

    geom::Pose M;
    M.q = geom::quat_normalize(Vec4{rng.normal(), rng.normal(), rng.normal(), rng.normal()});
    M.p = Vec3{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};

    gauss::DeformedGaussian gm = g;
    gm.position = geom::apply(M, g.position);
    gm.rotation = geom::quat_normalize(geom::quat_mul(M.q, g.rotation));

    auto a = raster::project_gaussian(g, geom::pose_identity(), cam, cfg);
    auto b = raster::project_gaussian(gm, M, cam, cfg);
    REQUIRE(a.has_value() == b.has_value());
    if (!a) continue;
    CHECK((a->mean - b->mean).norm() < 1e-6);
    CHECK((a->cov - b->cov).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(a->z == doctest::Approx(b->z).epsilon(1e-9));
  }
}

TEST_CASE("empty scene renders background") {
  auto cam = testsup::eye_camera();
  gauss::GaussianScene s;
  s.degree = 2;
  s.t_max = 1;
  auto out = raster::splat_forward(s, 0.0, geom::pose_identity(), cam);
  for (double v : out.image.data) CHECK(v == 0.0);
  for (double v : out.alpha.data) CHECK(v == 0.0);
  for (double v : out.depth.data) CHECK(v == 0.0);
  CHECK(out.agent_weights.empty());
}

TEST_CASE("single opaque splat") {
  auto cam = testsup::eye_camera(100, 100, 100.0);
  Vec3 col{3.0, -3.0, 1.0};
  auto s = one_splat(Vec3{0, 0, 5}, std::log(10.0), 10.0, col);
  auto out = raster::splat_forward(s, 0.0, geom::pose_identity(), cam);
  int cx = 50, cy = 50;
  // alpha clamps at 0.99; the footprint covers the whole image
  CHECK(out.alpha.at(cx, cy, 0) == doctest::Approx(0.99).epsilon(1e-6));
  for (int c = 0; c < 3; ++c)
    CHECK(out.image.at(cx, cy, c) == doctest::Approx(0.99 * sigmoid(col[c])).epsilon(1e-5));
  CHECK(out.depth.at(cx, cy, 0) == doctest::Approx(5.0).epsilon(1e-12));
  // depth equals the splat's z wherever alpha >= 0.5
  for (int y = 0; y < 100; y += 7)
    for (int x = 0; x < 100; x += 7)
      if (out.alpha.at(x, y, 0) >= 0.5)
        CHECK(out.depth.at(x, y, 0) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("two overlapping splats") {
  auto cam = testsup::eye_camera(100, 100, 100.0);
  gauss::GaussianScene s = one_splat(Vec3{0, 0, 5}, std::log(10.0), 0.0,
                                     Vec3{9, -9, -9}, 1);
  {
    auto back = one_splat(Vec3{0, 0, 10}, std::log(10.0), 0.0, Vec3{-9, -9, 9}, 2);
    s.add(back.primitive(0));
  }
  auto out = raster::splat_forward(s, 0.0, geom::pose_identity(), cam);

  // independent arithmetic at pixel (50,50): center offset (0.5, 0.5)
  auto alpha_at = [&](double z, double scale) {
    double var = (100.0 / z) * (100.0 / z) * scale * scale + 0.3;
    double q = 0.5 * (0.25 + 0.25) / var;
    return 0.5 * std::exp(-q);
  };
  double a1 = alpha_at(5, 10), a2 = alpha_at(10, 10);
  Vec3 c1{sigmoid(9.0), sigmoid(-9.0), sigmoid(-9.0)};
  Vec3 c2{sigmoid(-9.0), sigmoid(-9.0), sigmoid(9.0)};
  Vec3 expect = a1 * c1 + (1 - a1) * a2 * c2;
  double w1 = a1, w2 = (1 - a1) * a2;
  for (int c = 0; c < 3; ++c)
    CHECK(out.image.at(50, 50, c) == doctest::Approx(expect[c]).epsilon(1e-12));
  CHECK(out.alpha.at(50, 50, 0) == doctest::Approx(w1 + w2).epsilon(1e-12));
  CHECK(out.depth.at(50, 50, 0) ==
        doctest::Approx((w1 * 5 + w2 * 10) / (w1 + w2)).epsilon(1e-12));
  CHECK(out.agent_weights.at(1).at(50, 50, 0) == doctest::Approx(w1).epsilon(1e-12));
  CHECK(out.agent_weights.at(2).at(50, 50, 0) == doctest::Approx(w2).epsilon(1e-12));
  // the idealized front-half/back-quarter reading
  CHECK(out.image.at(50, 50, 0) == doctest::Approx(0.5).epsilon(2e-3));
  CHECK(out.image.at(50, 50, 2) == doctest::Approx(0.25).epsilon(2e-3));
}

TEST_CASE("tiled renderer matches reference blender") {
  auto cam = testsup::eye_camera();
  Rng rng(61);
  raster::RasterConfig strict;
  raster::RasterConfig training = strict;
  training.min_alpha = 1.0 / 255.0;
  for (int trial = 0; trial < 20; ++trial) {
    auto s = testsup::random_scene(rng, 20, 2);
    double t = rng.uniform(0.0, 2.0);
    for (const auto* cfg : {&strict, &training}) {
      raster::RasterConfig c4 = *cfg;
      c4.threads = 4;
      auto ref = testsup::ref_render(s, t, geom::pose_identity(), cam, *cfg);
      auto tiled = raster::splat_forward(s, t, geom::pose_identity(), cam, *cfg);
      auto tiled4 = raster::splat_forward(s, t, geom::pose_identity(), cam, c4);
      CHECK(output_diff(ref, tiled) < 1e-9);
      CHECK(output_diff(tiled, tiled4) == 0.0);
    }
  }
}

TEST_CASE("backward determinism across thread counts") {
  auto cam = testsup::eye_camera();
  Rng rng(71);
  auto s = testsup::random_scene(rng, 25, 2);
  Image dimg = Image::zeros(32, 32, 3);
  Image ddep = Image::zeros(32, 32, 1);
  for (double& v : dimg.data) v = rng.uniform(-1, 1);
  for (double& v : ddep.data) v = rng.uniform(-1, 1);
  raster::RasterConfig c1, c4, c7;
  c4.threads = 4;
  c7.threads = 7;
  auto g1 = raster::splat_backward(s, 0.5, geom::pose_identity(), cam, c1, dimg, ddep);
  auto g4 = raster::splat_backward(s, 0.5, geom::pose_identity(), cam, c4, dimg, ddep);
  auto g7 = raster::splat_backward(s, 0.5, geom::pose_identity(), cam, c7, dimg, ddep);
  CHECK(grads_diff(g1, g4) == 0.0);
  CHECK(grads_diff(g1, g7) == 0.0);
  CHECK(grad_linf(g1) > 0.0);
}

TEST_CASE("backward zero cotangent") {
  auto cam = testsup::eye_camera();
  Rng rng(73);
  auto s = testsup::random_scene(rng, 10, 2);
  Image dimg = Image::zeros(32, 32, 3);
  auto g = raster::splat_backward(s, 0.3, geom::pose_identity(), cam, {}, dimg, Image{});
  CHECK(grad_linf(g) == 0.0);
}

TEST_CASE("backward channel separation") {
  auto cam = testsup::eye_camera(64, 64, 60.0);
  auto s = one_splat(Vec3{0, 0, 6}, std::log(0.5), 0.5, Vec3{0.2, -0.1, 0.4});
  Image dimg = Image::zeros(64, 64, 3);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) dimg.at(x, y, 0) = 1.0;
  auto g = raster::splat_backward(s, 0.0, geom::pose_identity(), cam, {}, dimg, Image{});
  CHECK(g.color[0] > 0.0);
  CHECK(g.color[1] == 0.0);
  CHECK(g.color[2] == 0.0);
}

TEST_CASE("backward finite differences, weighted sums") {
  auto cam = testsup::eye_camera();
  Rng rng(83);
  raster::RasterConfig cfg;
  cfg.q_max = 30.0;  // keeps the contribution cutoff below fd resolution
  cfg.threads = 2;

  for (int trial = 0; trial < 6; ++trial) {
    auto s = testsup::fd_scene(rng, 8, 2);
    double t = rng.uniform(0.0, 2.0);
    auto base = raster::splat_forward(s, t, geom::pose_identity(), cam, cfg);

    Image wim = Image::zeros(32, 32, 3);
    Image wd = Image::zeros(32, 32, 1);
    double inv_n = 1.0 / (32.0 * 32.0);
    for (double& v : wim.data) v = rng.uniform(-1, 1) * inv_n;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (base.alpha.at(x, y, 0) >= 0.15)
          wd.at(x, y, 0) = rng.uniform(-1, 1) * inv_n;

    auto loss = [&](const gauss::GaussianScene& sc) {
      auto out = raster::splat_forward(sc, t, geom::pose_identity(), cam, cfg);
      double L = 0;
      for (size_t i = 0; i < out.image.data.size(); ++i)
        L += wim.data[i] * out.image.data[i];
      for (size_t i = 0; i < out.depth.data.size(); ++i)
        L += wd.data[i] * out.depth.data[i];
      return L;
    };
    auto g = raster::splat_backward(s, t, geom::pose_identity(), cam, cfg, wim, wd);
    auto rep = testsup::fd_compare(loss, s, g, 1e-5, 1e-3, 1e-7);
    INFO(rep.worst);
    CHECK(rep.failed == 0);
    CHECK(rep.checked > 0);
  }
}

TEST_CASE("backward matches directional derivative of L1 loss") {
  auto cam = testsup::eye_camera();
  Rng rng(89);
  raster::RasterConfig cfg;
  cfg.q_max = 30.0;
  auto s = testsup::fd_scene(rng, 10, 2);
  double t = 0.8;
  auto base = raster::splat_forward(s, t, geom::pose_identity(), cam, cfg);

  // targets pushed away from the render so the |.| terms stay one-sided
  Image tgt = Image::zeros(32, 32, 3);
  Image dtgt = Image::zeros(32, 32, 1);
  Image dmask = Image::zeros(32, 32, 1);
  for (size_t i = 0; i < tgt.data.size(); ++i)
    tgt.data[i] = base.image.data[i] + (rng.uniform() < 0.5 ? -0.1 : 0.1);
  int nmask = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (base.alpha.at(x, y, 0) >= 0.15) {
        dmask.at(x, y, 0) = 1.0;
        dtgt.at(x, y, 0) = base.depth.at(x, y, 0) + (rng.uniform() < 0.5 ? -0.5 : 0.5);
        ++nmask;
      }
  REQUIRE(nmask > 0);

  auto loss = [&](const gauss::GaussianScene& sc) {
    auto out = raster::splat_forward(sc, t, geom::pose_identity(), cam, cfg);
    double L = 0;
    for (size_t i = 0; i < out.image.data.size(); ++i)
      L += std::fabs(out.image.data[i] - tgt.data[i]) / (3.0 * 1024.0);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (dmask.at(x, y, 0) > 0)
          L += 0.1 * std::fabs(out.depth.at(x, y, 0) - dtgt.at(x, y, 0)) / nmask;
    return L;
  };

  Image dimg = Image::zeros(32, 32, 3);
  Image ddep = Image::zeros(32, 32, 1);
  for (size_t i = 0; i < dimg.data.size(); ++i)
    dimg.data[i] = (base.image.data[i] > tgt.data[i] ? 1.0 : -1.0) / (3.0 * 1024.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (dmask.at(x, y, 0) > 0)
        ddep.at(x, y, 0) =
            (base.depth.at(x, y, 0) > dtgt.at(x, y, 0) ? 0.1 : -0.1) / nmask;
  auto g = raster::splat_backward(s, t, geom::pose_identity(), cam, cfg, dimg, ddep);

  // random direction over every parameter array
  Rng dir_rng(97);
  auto sp = s, sm = s;
  double dot = 0;
  auto push = [&](std::vector<double>& vp, std::vector<double>& vm,
                  const std::vector<double>& gv) {
    for (size_t i = 0; i < vp.size(); ++i) {
      double d = dir_rng.normal();
      vp[i] += 1e-4 * d;
      vm[i] -= 1e-4 * d;
      dot += gv[i] * d;
    }
  };
  push(sp.pos, sm.pos, g.pos);
  push(sp.opacity, sm.opacity, g.opacity);
  push(sp.log_scale, sm.log_scale, g.log_scale);
  push(sp.rot, sm.rot, g.rot);
  push(sp.color, sm.color, g.color);
  push(sp.dpos, sm.dpos, g.dpos);
  push(sp.dopacity, sm.dopacity, g.dopacity);
  push(sp.dscale, sm.dscale, g.dscale);
  push(sp.drot, sm.drot, g.drot);
  push(sp.dcolor, sm.dcolor, g.dcolor);

  double fd = (loss(sp) - loss(sm)) / 2e-4;
  CHECK(std::fabs(dot - fd) <= 1e-3 * std::max(std::fabs(fd), 1e-6));
}

TEST_CASE("render_video") {
  auto cam = testsup::eye_camera();
  auto s = one_splat(Vec3{0, 0, 6}, std::log(0.4), 1.0, Vec3{1, 0, -1}, 1);
  s.t_max = 1.0;

  geom::Trajectory traj;
  traj.frame_id = "ego_start";
  for (int k = 0; k < 3; ++k) {
    traj.t.push_back(0.0);
    traj.poses.push_back(geom::pose_identity());
  }
  auto frames = raster::render_video(s, traj, cam);
  REQUIRE(frames.size() == 3);
  auto single = raster::splat_forward(s, 0.0, geom::pose_identity(), cam);
  CHECK(output_diff(frames[0], single) == 0.0);
  CHECK(output_diff(frames[1], frames[0]) == 0.0);
  CHECK(output_diff(frames[2], frames[0]) == 0.0);

  // agent weight centroid follows scripted motion
  gauss::GaussianScene mv = s;
  mv.dpos[0] = 4.0;  // linear x drift of the only primitive
  geom::Trajectory mtraj;
  mtraj.frame_id = "ego_start";
  for (int k = 0; k < 5; ++k) {
    mtraj.t.push_back(0.25 * k);
    mtraj.poses.push_back(geom::pose_identity());
  }
  auto mframes = raster::render_video(mv, mtraj, cam);
  double prev = -1e300;
  for (const auto& f : mframes) {
    const Image& w = f.agent_weights.at(1);
    double sx = 0, sw = 0;
    for (int y = 0; y < w.height; ++y)
      for (int x = 0; x < w.width; ++x) {
        sx += w.at(x, y, 0) * x;
        sw += w.at(x, y, 0);
      }
    REQUIRE(sw > 0);
    double cxp = sx / sw;
    CHECK(cxp > prev);
    prev = cxp;
  }

  geom::Trajectory bad = traj;
  bad.t[1] = 9.0;
  CHECK_THROWS_AS(raster::render_video(s, bad, cam), std::out_of_range);
}

TEST_CASE("output invariants") {
  auto cam = testsup::eye_camera();
  Rng rng(101);
  raster::RasterConfig training;
  training.min_alpha = 1.0 / 255.0;
  for (int trial = 0; trial < 5; ++trial) {
    auto s = testsup::random_scene(rng, 30, 2);
    auto out = raster::splat_forward(s, 1.0, geom::pose_identity(), cam, training);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        double a = out.alpha.at(x, y, 0);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0 + 1e-12);
        double ws = 0;
        for (const auto& [id, im] : out.agent_weights) ws += im.at(x, y, 0);
        CHECK(ws <= a + 1e-6);
        for (int c = 0; c < 3; ++c) {
          CHECK(out.image.at(x, y, c) >= 0.0);
          CHECK(out.image.at(x, y, c) <= 1.0 + 1e-12);
        }
      }
  }
}

TEST_CASE("image file round trips") {
  Rng rng(103);
  Image im = Image::zeros(9, 5, 3);
  for (double& v : im.data) v = rng.uniform(0, 1);
  std::string p = "round_trip_test.ppm";
  save_ppm(p, im);
  Image back = load_ppm(p);
  REQUIRE(back.same_shape(im));
  CHECK(testsup::max_image_diff(im, back) <= 0.5 / 255.0 + 1e-12);
  std::remove(p.c_str());

  Image d = Image::zeros(7, 4, 1);
  for (double& v : d.data) v = rng.uniform(0, 40);
  std::string pd = "round_trip_test.dpth";
  save_depth(pd, d);
  Image dback = load_depth(pd);
  REQUIRE(dback.same_shape(d));
  for (size_t i = 0; i < d.data.size(); ++i)
    CHECK(dback.data[i] == doctest::Approx(d.data[i]).epsilon(1e-6));
  std::remove(pd.c_str());
}
