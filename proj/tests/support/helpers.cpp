#include "support/helpers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace testsup {

geom::CameraModel eye_camera(int w, int h, double f) {
  geom::CameraModel cam;
  cam.fx = cam.fy = f;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.width = w;
  cam.height = h;
  cam.ego_to_camera = geom::pose_identity();
  return cam;
}

geom::CameraModel drive_camera(int w, int h, double f) {
  geom::CameraModel cam;
  cam.fx = cam.fy = f;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.width = w;
  cam.height = h;
  cam.ego_to_camera = geom::default_ego_to_camera();
  cam.ego_to_camera.p =
      -(geom::rotation_matrix(cam.ego_to_camera) * geom::Vec3{0, 0, 1.6});
  // Ground pancakes just under the camera blow up under EWA and veil the
  // whole image; 3.0 culls them while everything it culls projects below
  // the bottom image row anyway (the visible floor starts at depth ~3.9).
  cam.near_clip = 3.0;
  return cam;
}

namespace {

struct SceneSpread {
  double op_lo, op_hi;
  double sc_lo, sc_hi;
  double dop_sigma;
};

gauss::GaussianScene make_scene(Rng& rng, int n, int degree, double t_max,
                                const SceneSpread& sp) {
  gauss::GaussianScene s;
  s.degree = degree;
  s.t0 = 0;
  s.t_min = 0;
  s.t_max = t_max;
  for (int i = 0; i < n; ++i) {
    gauss::GaussianPrimitive g;
    double z = rng.uniform(4.0, 12.0);
    g.position = {rng.uniform(-0.45, 0.45) * z, rng.uniform(-0.45, 0.45) * z, z};
    g.opacity_logit = rng.uniform(sp.op_lo, sp.op_hi);
    double sc = rng.uniform(sp.sc_lo, sp.sc_hi);
    g.log_scale = {std::log(sc * rng.uniform(0.7, 1.4)),
                   std::log(sc * rng.uniform(0.7, 1.4)),
                   std::log(sc * rng.uniform(0.7, 1.4))};
    geom::Vec4 q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    if (q[0] < 0) q = -q;
    g.rotation = geom::quat_normalize(q);
    g.color_logit = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                     rng.uniform(-1.5, 1.5)};
    g.agent_id = i % 3;
    g.temporal = gauss::TemporalCoeffs::zero(degree);
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < degree; ++k) {
        g.temporal.dpos(r, k) = rng.normal(0, 0.05);
        g.temporal.dscale(r, k) = rng.normal(0, 0.04);
        g.temporal.drot(r, k) = rng.normal(0, 0.05);
        g.temporal.dcolor(r, k) = rng.normal(0, 0.08);
      }
    for (int k = 0; k < degree; ++k)
      g.temporal.dopacity(0, k) = rng.normal(0, sp.dop_sigma);
    s.add(g);
  }
  return s;
}

}  // namespace

gauss::GaussianScene random_scene(Rng& rng, int n, int degree, double t_max) {
  return make_scene(rng, n, degree, t_max, {-2.0, 1.5, 0.06, 0.3, 0.05});
}

gauss::GaussianScene fd_scene(Rng& rng, int n, int degree, double t_max) {
  return make_scene(rng, n, degree, t_max, {-2.5, -1.0, 0.12, 0.35, 0.02});
}

raster::RenderOutput ref_render(const gauss::GaussianScene& scene, double t,
                                const geom::Pose& ego_pose,
                                const geom::CameraModel& cam,
                                const raster::RasterConfig& cfg) {
  struct Item {
    raster::Splat2D s;
    Eigen::Matrix2d inv;
    int idx;
  };
  std::vector<Item> items;
  for (size_t i = 0; i < scene.size(); ++i) {
    auto sp = raster::project_gaussian(gauss::deform(scene, i, t), ego_pose, cam, cfg);
    if (!sp) continue;
    items.push_back({*sp, sp->cov.inverse(), static_cast<int>(i)});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.s.z != b.s.z) return a.s.z < b.s.z;
    return a.idx < b.idx;
  });

  raster::RenderOutput out;
  out.image = Image::zeros(cam.width, cam.height, 3);
  out.depth = Image::zeros(cam.width, cam.height, 1);
  out.alpha = Image::zeros(cam.width, cam.height, 1);
  for (int id : scene.agent_id)
    if (id >= 1 && !out.agent_weights.count(id))
      out.agent_weights.emplace(id, Image::zeros(cam.width, cam.height, 1));

  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      double T = 1.0, A = 0.0, Dn = 0.0;
      Eigen::Vector3d C = Eigen::Vector3d::Zero();
      for (const Item& it : items) {
        if (T < cfg.min_transmittance) break;
        Eigen::Vector2d d{x + 0.5 - it.s.mean.x(), y + 0.5 - it.s.mean.y()};
        double q = 0.5 * d.dot(it.inv * d);
        if (q > cfg.q_max) continue;
        double alpha = std::min(cfg.alpha_clamp, it.s.opacity * std::exp(-q));
        if (alpha < cfg.min_alpha) continue;
        double w = T * alpha;
        C += w * it.s.color;
        A += w;
        Dn += w * it.s.z;
        if (it.s.agent_id >= 1) out.agent_weights.at(it.s.agent_id).at(x, y, 0) += w;
        T *= 1.0 - alpha;
      }
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = C[c];
      out.alpha.at(x, y, 0) = A;
      out.depth.at(x, y, 0) = A >= cfg.depth_alpha_eps ? Dn / A : 0.0;
    }
  return out;
}

namespace {

struct ArrayRef {
  const char* name;
  std::vector<double> gauss::GaussianScene::*scene_member;
  std::vector<double> gauss::SceneGrads::*grad_member;
};

const ArrayRef kArrays[] = {
    {"pos", &gauss::GaussianScene::pos, &gauss::SceneGrads::pos},
    {"opacity", &gauss::GaussianScene::opacity, &gauss::SceneGrads::opacity},
    {"log_scale", &gauss::GaussianScene::log_scale, &gauss::SceneGrads::log_scale},
    {"rot", &gauss::GaussianScene::rot, &gauss::SceneGrads::rot},
    {"color", &gauss::GaussianScene::color, &gauss::SceneGrads::color},
    {"dpos", &gauss::GaussianScene::dpos, &gauss::SceneGrads::dpos},
    {"dopacity", &gauss::GaussianScene::dopacity, &gauss::SceneGrads::dopacity},
    {"dscale", &gauss::GaussianScene::dscale, &gauss::SceneGrads::dscale},
    {"drot", &gauss::GaussianScene::drot, &gauss::SceneGrads::drot},
    {"dcolor", &gauss::GaussianScene::dcolor, &gauss::SceneGrads::dcolor},
};

}  // namespace

FdReport fd_compare(const std::function<double(const gauss::GaussianScene&)>& f,
                    const gauss::GaussianScene& base,
                    const gauss::SceneGrads& analytic, double h, double rtol,
                    double floor) {
  FdReport rep;
  gauss::GaussianScene s = base;
  for (const ArrayRef& ar : kArrays) {
    std::vector<double>& vals = s.*(ar.scene_member);
    const std::vector<double>& grad = analytic.*(ar.grad_member);
    for (size_t k = 0; k < vals.size(); ++k) {
      double keep = vals[k];
      vals[k] = keep + h;
      double fp = f(s);
      vals[k] = keep - h;
      double fm = f(s);
      vals[k] = keep;
      double fd = (fp - fm) / (2 * h);
      double a = grad[k];
      double err = std::fabs(a - fd);
      double rel = err / std::max(std::fabs(fd), 1e-300);
      ++rep.checked;
      if (err > std::max(rtol * std::fabs(fd), floor)) {
        ++rep.failed;
        if (err > rep.max_abs) {
          char buf[160];
          std::snprintf(buf, sizeof(buf), "%s[%zu]: analytic=%.9g fd=%.9g", ar.name,
                        k, a, fd);
          rep.worst = buf;
        }
      }
      rep.max_abs = std::max(rep.max_abs, err);
      if (err > floor) rep.max_rel = std::max(rep.max_rel, rel);
    }
  }
  return rep;
}

double max_image_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) return 1e300;
  double m = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace testsup
