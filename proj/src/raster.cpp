#include "splat4d/raster.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <stdexcept>
#include <thread>

namespace splat4d::raster {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename F>
void parallel_for(int threads, size_t n, F&& f) {
  if (threads <= 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) f(i);
    return;
  }
  size_t k = std::min(static_cast<size_t>(threads), n);
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(k);
  for (size_t t = 0; t < k; ++t)
    pool.emplace_back([&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= n) return;
        f(i);
      }
    });
  for (auto& th : pool) th.join();
}

struct ViewFrame {
  Eigen::Matrix3d R;
  Vec3 t;
};

ViewFrame make_view(const geom::Pose& ego_pose, const geom::CameraModel& cam) {
  geom::Pose V = geom::compose(cam.ego_to_camera, geom::pose_inverse(ego_pose));
  return {geom::rotation_matrix(V), V.p};
}

struct Projected {
  bool valid = false;
  Vec2 mean;
  Eigen::Matrix2d inv_cov;
  Eigen::Matrix2d cov;
  double z = 0;
  Vec3 rgb{0, 0, 0};
  double op = 0;
  double radius = 0;
  int agent = 0;
};

Projected project_one(const gauss::DeformedGaussian& g, const ViewFrame& vf,
                      const geom::CameraModel& cam, const RasterConfig& cfg) {
  Projected out;
  Vec3 p = vf.R * g.position + vf.t;
  if (p.z() <= cam.near_clip) return out;

  double op = sigmoid(g.opacity_logit);
  double q_eff = cfg.q_max;
  if (cfg.min_alpha > 0) {
    if (op <= cfg.min_alpha) return out;
    q_eff = std::min(q_eff, std::log(op / cfg.min_alpha));
  }

  Eigen::Matrix3d Sigma = gauss::covariance(g.log_scale, g.rotation);
  Eigen::Matrix<double, 2, 3> J = geom::projection_jacobian(cam, p);
  Eigen::Matrix2d c2 = J * (vf.R * Sigma * vf.R.transpose()) * J.transpose();
  c2(0, 0) += cfg.blur_floor;
  c2(1, 1) += cfg.blur_floor;

  double mid = 0.5 * (c2(0, 0) + c2(1, 1));
  double disc = std::sqrt(0.25 * (c2(0, 0) - c2(1, 1)) * (c2(0, 0) - c2(1, 1)) +
                          c2(0, 1) * c2(0, 1));
  double lam_max = mid + disc;
  double radius = std::sqrt(2.0 * q_eff * lam_max);

  double u = cam.fx * p.x() / p.z() + cam.cx;
  double v = cam.fy * p.y() / p.z() + cam.cy;
  if (u + radius < 0 || u - radius > cam.width || v + radius < 0 ||
      v - radius > cam.height)
    return out;

  double det = c2(0, 0) * c2(1, 1) - c2(0, 1) * c2(0, 1);
  out.inv_cov << c2(1, 1) / det, -c2(0, 1) / det, -c2(0, 1) / det, c2(0, 0) / det;
  out.cov = c2;
  out.mean = Vec2{u, v};
  out.z = p.z();
  for (int k = 0; k < 3; ++k) out.rgb[k] = sigmoid(g.color_logit[k]);
  out.op = op;
  out.radius = radius;
  out.agent = g.agent_id;
  out.valid = true;
  return out;
}

void check_time(const gauss::GaussianScene& scene, double t) {
  constexpr double kSlack = 1e-9;
  if (t < scene.t_min - kSlack || t > scene.t_max + kSlack)
    throw std::out_of_range("render time outside scene time range");
}

struct TileGrid {
  int tiles_x, tiles_y, tile;
  std::vector<std::vector<int>> lists;  // sorted by (z, index) per tile
};

TileGrid bin_splats(const std::vector<Projected>& ps, int W, int H, int tile) {
  TileGrid g;
  g.tile = tile;
  g.tiles_x = (W + tile - 1) / tile;
  g.tiles_y = (H + tile - 1) / tile;
  g.lists.assign(static_cast<size_t>(g.tiles_x) * g.tiles_y, {});
  for (int i = 0; i < static_cast<int>(ps.size()); ++i) {
    const Projected& s = ps[i];
    if (!s.valid) continue;
    int x0 = std::max(0, static_cast<int>(std::floor((s.mean.x() - s.radius) / tile)));
    int x1 = std::min(g.tiles_x - 1,
                      static_cast<int>(std::floor((s.mean.x() + s.radius) / tile)));
    int y0 = std::max(0, static_cast<int>(std::floor((s.mean.y() - s.radius) / tile)));
    int y1 = std::min(g.tiles_y - 1,
                      static_cast<int>(std::floor((s.mean.y() + s.radius) / tile)));
    for (int ty = y0; ty <= y1; ++ty)
      for (int tx = x0; tx <= x1; ++tx)
        g.lists[static_cast<size_t>(ty) * g.tiles_x + tx].push_back(i);
  }
  for (auto& list : g.lists)
    std::sort(list.begin(), list.end(), [&ps](int a, int b) {
      if (ps[a].z != ps[b].z) return ps[a].z < ps[b].z;
      return a < b;
    });
  return g;
}

std::vector<Projected> project_all(const gauss::GaussianScene& scene, double t,
                                   const ViewFrame& vf,
                                   const geom::CameraModel& cam,
                                   const RasterConfig& cfg) {
  std::vector<Projected> ps(scene.size());
  parallel_for(cfg.threads, scene.size(), [&](size_t i) {
    ps[i] = project_one(gauss::deform(scene, i, t), vf, cam, cfg);
  });
  return ps;
}

}  // namespace

std::optional<Splat2D> project_gaussian(const gauss::DeformedGaussian& g,
                                        const geom::Pose& ego_pose,
                                        const geom::CameraModel& cam,
                                        const RasterConfig& cfg) {
  Projected p = project_one(g, make_view(ego_pose, cam), cam, cfg);
  if (!p.valid) return std::nullopt;
  return Splat2D{p.mean, p.cov, p.z, p.rgb, p.op, p.agent};
}

RenderOutput splat_forward(const gauss::GaussianScene& scene, double t,
                           const geom::Pose& ego_pose,
                           const geom::CameraModel& cam,
                           const RasterConfig& cfg) {
  check_time(scene, t);
  const int W = cam.width, H = cam.height;
  ViewFrame vf = make_view(ego_pose, cam);
  std::vector<Projected> ps = project_all(scene, t, vf, cam, cfg);
  TileGrid grid = bin_splats(ps, W, H, cfg.tile);

  RenderOutput out;
  out.image = Image::zeros(W, H, 3);
  out.depth = Image::zeros(W, H, 1);
  out.alpha = Image::zeros(W, H, 1);
  std::set<int> ids(scene.agent_id.begin(), scene.agent_id.end());
  for (int id : ids)
    if (id >= 1) out.agent_weights.emplace(id, Image::zeros(W, H, 1));

  parallel_for(cfg.threads, grid.lists.size(), [&](size_t tid) {
    const auto& list = grid.lists[tid];
    int tx = static_cast<int>(tid) % grid.tiles_x;
    int ty = static_cast<int>(tid) / grid.tiles_x;
    int x0 = tx * cfg.tile, x1 = std::min(W, x0 + cfg.tile);
    int y0 = ty * cfg.tile, y1 = std::min(H, y0 + cfg.tile);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        double T = 1.0, A = 0.0, Dn = 0.0;
        Vec3 C = Vec3::Zero();
        for (int si : list) {
          if (T < cfg.min_transmittance) break;
          const Projected& s = ps[si];
          Vec2 d{x + 0.5 - s.mean.x(), y + 0.5 - s.mean.y()};
          double q = 0.5 * d.dot(s.inv_cov * d);
          if (q > cfg.q_max) continue;
          double alpha = std::min(cfg.alpha_clamp, s.op * std::exp(-q));
          if (alpha < cfg.min_alpha) continue;
          double w = T * alpha;
          C += w * s.rgb;
          A += w;
          Dn += w * s.z;
          if (s.agent >= 1) out.agent_weights.at(s.agent).at(x, y, 0) += w;
          T *= 1.0 - alpha;
        }
        for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = C[c];
        out.alpha.at(x, y, 0) = A;
        out.depth.at(x, y, 0) = A >= cfg.depth_alpha_eps ? Dn / A : 0.0;
      }
  });
  return out;
}

namespace {

struct SplatGrad2D {
  double dmx = 0, dmy = 0;          // d/d mean2d
  double dca = 0, dcb = 0, dcc = 0; // d/d cov2d entries (a, b, c)
  double dz = 0, dop = 0;
  double dr = 0, dg = 0, db = 0;    // d/d activated color
};

struct PixEntry {
  int slot;
  double alpha, G, T;  // T = transmittance before this contribution
  double dx, dy;
  bool clamped;
};

}  // namespace

gauss::SceneGrads splat_backward(const gauss::GaussianScene& scene, double t,
                                 const geom::Pose& ego_pose,
                                 const geom::CameraModel& cam,
                                 const RasterConfig& cfg,
                                 const Image& dL_dimage,
                                 const Image& dL_ddepth) {
  check_time(scene, t);
  const int W = cam.width, H = cam.height;
  if (dL_dimage.width != W || dL_dimage.height != H || dL_dimage.channels != 3)
    throw std::invalid_argument("splat_backward: dL_dimage shape mismatch");
  bool has_depth_grad = !dL_ddepth.data.empty();
  if (has_depth_grad &&
      (dL_ddepth.width != W || dL_ddepth.height != H || dL_ddepth.channels != 1))
    throw std::invalid_argument("splat_backward: dL_ddepth shape mismatch");

  ViewFrame vf = make_view(ego_pose, cam);
  std::vector<Projected> ps = project_all(scene, t, vf, cam, cfg);
  TileGrid grid = bin_splats(ps, W, H, cfg.tile);

  // phase 1: per-tile pixel-space gradients, tiles independent
  std::vector<std::vector<SplatGrad2D>> tile_grads(grid.lists.size());
  parallel_for(cfg.threads, grid.lists.size(), [&](size_t tid) {
    const auto& list = grid.lists[tid];
    if (list.empty()) return;
    auto& acc = tile_grads[tid];
    acc.assign(list.size(), SplatGrad2D{});
    int tx = static_cast<int>(tid) % grid.tiles_x;
    int ty = static_cast<int>(tid) / grid.tiles_x;
    int x0 = tx * cfg.tile, x1 = std::min(W, x0 + cfg.tile);
    int y0 = ty * cfg.tile, y1 = std::min(H, y0 + cfg.tile);
    std::vector<PixEntry> entries;
    entries.reserve(64);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        entries.clear();
        double T = 1.0, A = 0.0, Dn = 0.0;
        for (size_t li = 0; li < list.size(); ++li) {
          if (T < cfg.min_transmittance) break;
          const Projected& s = ps[list[li]];
          double dx = x + 0.5 - s.mean.x(), dy = y + 0.5 - s.mean.y();
          double vx = s.inv_cov(0, 0) * dx + s.inv_cov(0, 1) * dy;
          double vy = s.inv_cov(1, 0) * dx + s.inv_cov(1, 1) * dy;
          double q = 0.5 * (dx * vx + dy * vy);
          if (q > cfg.q_max) continue;
          double G = std::exp(-q);
          double raw = s.op * G;
          bool clamped = raw > cfg.alpha_clamp;
          double alpha = clamped ? cfg.alpha_clamp : raw;
          if (alpha < cfg.min_alpha) continue;
          entries.push_back({static_cast<int>(li), alpha, G, T, dx, dy, clamped});
          double w = T * alpha;
          A += w;
          Dn += w * s.z;
          T *= 1.0 - alpha;
        }
        if (entries.empty()) continue;

        Vec3 dC{dL_dimage.at(x, y, 0), dL_dimage.at(x, y, 1), dL_dimage.at(x, y, 2)};
        double dDn = 0.0, dA = 0.0;
        if (has_depth_grad && A >= cfg.depth_alpha_eps) {
          double gd = dL_ddepth.at(x, y, 0);
          dDn = gd / A;
          dA = -gd * Dn / (A * A);
        }
        if (dC.isZero(0.0) && dDn == 0.0 && dA == 0.0) continue;

        Vec3 Sc = Vec3::Zero();
        double Sa = 0.0, Sz = 0.0;
        for (size_t k = entries.size(); k-- > 0;) {
          const PixEntry& e = entries[k];
          const Projected& s = ps[list[e.slot]];
          double w = e.T * e.alpha;
          double dalpha = e.T * (dC.dot(s.rgb) + dDn * s.z + dA) -
                          (dC.dot(Sc) + dDn * Sz + dA * Sa) / (1.0 - e.alpha);
          SplatGrad2D& g = acc[e.slot];
          g.dr += w * dC[0];
          g.dg += w * dC[1];
          g.db += w * dC[2];
          g.dz += w * dDn;
          if (!e.clamped) {
            g.dop += e.G * dalpha;
            double dq = -e.alpha * dalpha;  // d alpha/d q = -alpha (unclamped)
            double vx = s.inv_cov(0, 0) * e.dx + s.inv_cov(0, 1) * e.dy;
            double vy = s.inv_cov(1, 0) * e.dx + s.inv_cov(1, 1) * e.dy;
            g.dmx -= dq * vx;
            g.dmy -= dq * vy;
            // half the tied off-diagonal derivative per slot, so (dca, dcb,
            // dcb, dcc) is the symmetric full-matrix cotangent of cov2d
            g.dca -= 0.5 * dq * vx * vx;
            g.dcb -= 0.5 * dq * vx * vy;
            g.dcc -= 0.5 * dq * vy * vy;
          }
          Sc += w * s.rgb;
          Sa += w;
          Sz += w * s.z;
        }
      }
  });

  // phase 2: fixed-order reduction of tile partials
  size_t N = scene.size();
  std::vector<SplatGrad2D> g2(N);
  for (size_t tid = 0; tid < grid.lists.size(); ++tid) {
    const auto& list = grid.lists[tid];
    const auto& acc = tile_grads[tid];
    for (size_t li = 0; li < acc.size(); ++li) {
      const SplatGrad2D& a = acc[li];
      SplatGrad2D& g = g2[list[li]];
      g.dmx += a.dmx;
      g.dmy += a.dmy;
      g.dca += a.dca;
      g.dcb += a.dcb;
      g.dcc += a.dcc;
      g.dz += a.dz;
      g.dop += a.dop;
      g.dr += a.dr;
      g.dg += a.dg;
      g.db += a.db;
    }
  }

  // phase 3: pixel-space gradients -> parameter gradients, per splat
  gauss::SceneGrads grads = gauss::SceneGrads::zeros(scene);
  int D = scene.degree;
  double basis[16];
  scene.time_basis(t, basis);
  parallel_for(cfg.threads, N, [&](size_t i) {
    if (!ps[i].valid) return;
    const SplatGrad2D& g = g2[i];
    bool any = g.dmx != 0 || g.dmy != 0 || g.dca != 0 || g.dcb != 0 ||
               g.dcc != 0 || g.dz != 0 || g.dop != 0 || g.dr != 0 ||
               g.dg != 0 || g.db != 0;
    if (!any) return;

    gauss::DeformedGaussian dg = gauss::deform(scene, i, t);
    size_t d = static_cast<size_t>(D);
    Vec3 w_rot = Vec3::Zero();
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < D; ++k)
        w_rot[r] += scene.drot[(3 * i + r) * d + k] * basis[k];
    geom::Vec4 base{scene.rot[4 * i], scene.rot[4 * i + 1], scene.rot[4 * i + 2],
                    scene.rot[4 * i + 3]};
    geom::Vec4 qe = geom::quat_exp(w_rot);
    geom::Vec4 q_prod = geom::quat_mul(qe, base);

    Vec3 p = vf.R * dg.position + vf.t;
    Eigen::Matrix<double, 2, 3> J = geom::projection_jacobian(cam, p);
    Eigen::Matrix3d Sigma = gauss::covariance(dg.log_scale, q_prod);
    Eigen::Matrix3d M = vf.R * Sigma * vf.R.transpose();

    Eigen::Matrix2d G2;
    G2 << g.dca, g.dcb, g.dcb, g.dcc;
    Eigen::Vector2d gmean{g.dmx, g.dmy};

    Eigen::Matrix3d dM = J.transpose() * G2 * J;
    Eigen::Matrix<double, 2, 3> dJ = 2.0 * G2 * J * M;

    Vec3 dp = J.transpose() * gmean;
    dp.z() += g.dz;
    double z = p.z(), iz2 = 1.0 / (z * z), iz3 = iz2 / z;
    dp.x() += dJ(0, 2) * (-cam.fx * iz2);
    dp.y() += dJ(1, 2) * (-cam.fy * iz2);
    dp.z() += dJ(0, 0) * (-cam.fx * iz2) + dJ(1, 1) * (-cam.fy * iz2) +
              dJ(0, 2) * (2.0 * cam.fx * p.x() * iz3) +
              dJ(1, 2) * (2.0 * cam.fy * p.y() * iz3);

    Vec3 dpos = vf.R.transpose() * dp;
    Eigen::Matrix3d dSigma = vf.R.transpose() * dM * vf.R;

    Vec3 dls;
    geom::Vec4 dq_prod;
    gauss::covariance_backward(dg.log_scale, q_prod, dSigma, &dls, &dq_prod);

    geom::Vec4 dbase = gauss::quat_mul_jac_b(qe).transpose() * dq_prod;
    geom::Vec4 dqe = gauss::quat_mul_jac_a(base).transpose() * dq_prod;
    Vec3 dw = gauss::quat_exp_jacobian(w_rot).transpose() * dqe;

    double op = ps[i].op;
    double dgamma = g.dop * op * (1.0 - op);
    Vec3 dcol;
    for (int c = 0; c < 3; ++c) {
      double col = ps[i].rgb[c];
      double gc = c == 0 ? g.dr : (c == 1 ? g.dg : g.db);
      dcol[c] = gc * col * (1.0 - col);
    }

    for (int r = 0; r < 3; ++r) {
      grads.pos[3 * i + r] = dpos[r];
      grads.log_scale[3 * i + r] = dls[r];
      grads.color[3 * i + r] = dcol[r];
      for (int k = 0; k < D; ++k) {
        grads.dpos[(3 * i + r) * d + k] = dpos[r] * basis[k];
        grads.dscale[(3 * i + r) * d + k] = dls[r] * basis[k];
        grads.dcolor[(3 * i + r) * d + k] = dcol[r] * basis[k];
        grads.drot[(3 * i + r) * d + k] = dw[r] * basis[k];
      }
    }
    grads.opacity[i] = dgamma;
    for (int k = 0; k < D; ++k) grads.dopacity[i * d + k] = dgamma * basis[k];
    for (int c = 0; c < 4; ++c) grads.rot[4 * i + c] = dbase[c];
  });
  return grads;
}

std::vector<RenderOutput> render_video(const gauss::GaussianScene& scene,
                                       const geom::Trajectory& traj,
                                       const geom::CameraModel& cam,
                                       const RasterConfig& cfg) {
  if (traj.size() == 0) throw std::invalid_argument("render_video: empty trajectory");
  for (double t : traj.t) check_time(scene, t);
  std::vector<RenderOutput> out;
  out.reserve(traj.size());
  for (size_t i = 0; i < traj.size(); ++i)
    out.push_back(splat_forward(scene, traj.t[i], traj.poses[i], cam, cfg));
  return out;
}

}  // namespace splat4d::raster
