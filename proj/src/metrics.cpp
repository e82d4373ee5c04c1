#include "splat4d/metrics.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "splat4d/training.hpp"

namespace splat4d::metrics {

std::vector<Box2D> detect_agent_boxes(const raster::RenderOutput& render,
                                      double tau_w) {
  std::vector<Box2D> out;
  for (const auto& [id, wmap] : render.agent_weights) {
    int min_x = wmap.width, min_y = wmap.height, max_x = -1, max_y = -1;
    for (int y = 0; y < wmap.height; ++y)
      for (int x = 0; x < wmap.width; ++x)
        if (wmap.at(x, y, 0) >= tau_w) {
          min_x = std::min(min_x, x);
          min_y = std::min(min_y, y);
          max_x = std::max(max_x, x);
          max_y = std::max(max_y, y);
        }
    if (max_x < 0) continue;
    Box2D box;
    box.lo = Vec2(min_x, min_y);
    box.hi = Vec2(max_x + 1, max_y + 1);
    box.agent_id = id;
    out.push_back(box);
  }
  return out;
}

double iou(const Box2D& a, const Box2D& b) {
  double area_a = std::max(0.0, a.hi.x() - a.lo.x()) *
                  std::max(0.0, a.hi.y() - a.lo.y());
  double area_b = std::max(0.0, b.hi.x() - b.lo.x()) *
                  std::max(0.0, b.hi.y() - b.lo.y());
  double ix = std::max(
      0.0, std::min(a.hi.x(), b.hi.x()) - std::max(a.lo.x(), b.lo.x()));
  double iy = std::max(
      0.0, std::min(a.hi.y(), b.hi.y()) - std::max(a.lo.y(), b.lo.y()));
  double inter = ix * iy;
  double uni = area_a + area_b - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::optional<double> nta_frame(const std::vector<Box2D>& projected,
                                const std::vector<Box2D>& detected,
                                const NtaConfig& cfg) {
  if (projected.empty()) return std::nullopt;
  double sum = 0;
  for (const Box2D& p : projected) {
    Vec2 pc = 0.5 * (p.lo + p.hi);
    double best_d = std::numeric_limits<double>::infinity();
    const Box2D* best = nullptr;
    for (const Box2D& d : detected) {
      double dist = (0.5 * (d.lo + d.hi) - pc).norm();
      if (dist < best_d) {
        best_d = dist;
        best = &d;
      }
    }
    double gate =
        cfg.fixed_d_thresh > 0 ? cfg.fixed_d_thresh : (p.hi - p.lo).norm();
    if (best && best_d < gate) sum += iou(p, *best);
  }
  return sum / static_cast<double>(projected.size());
}

double nta_iou(const std::vector<std::vector<Box2D>>& projected,
               const std::vector<std::vector<Box2D>>& detected,
               const NtaConfig& cfg) {
  if (projected.size() != detected.size())
    throw std::invalid_argument("nta_iou: frame count mismatch");
  double sum = 0;
  int n = 0;
  for (size_t i = 0; i < projected.size(); ++i)
    if (auto s = nta_frame(projected[i], detected[i], cfg)) {
      sum += *s;
      ++n;
    }
  return n > 0 ? sum / n : 1.0;
}

namespace {

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  Vec2 d = b - a;
  double len2 = d.squaredNorm();
  double t = len2 > 0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * d)).norm();
}

}  // namespace

Image rasterize_lanes(const std::vector<std::array<Vec2, 2>>& lanes2d,
                      int width, int height, double stroke) {
  Image mask = Image::zeros(width, height, 1);
  double r = stroke / 2;
  for (const auto& seg : lanes2d) {
    if (!seg[0].allFinite() || !seg[1].allFinite()) continue;
    int x0 = std::max(
        0, static_cast<int>(std::floor(std::min(seg[0].x(), seg[1].x()) - r)));
    int x1 = std::min(width - 1, static_cast<int>(std::ceil(
                                     std::max(seg[0].x(), seg[1].x()) + r)));
    int y0 = std::max(
        0, static_cast<int>(std::floor(std::min(seg[0].y(), seg[1].y()) - r)));
    int y1 = std::min(height - 1, static_cast<int>(std::ceil(
                                      std::max(seg[0].y(), seg[1].y()) + r)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (segment_distance(Vec2(x + 0.5, y + 0.5), seg[0], seg[1]) <= r)
          mask.at(x, y, 0) = 1.0;
  }
  return mask;
}

Image detect_lane_mask(const Image& image) {
  if (image.channels != 3)
    throw std::invalid_argument("detect_lane_mask: RGB image expected");
  Image mask = Image::zeros(image.width, image.height, 1);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      double m = std::min({image.at(x, y, 0), image.at(x, y, 1),
                           image.at(x, y, 2)});
      if (m >= 0.75) mask.at(x, y, 0) = 1.0;
    }
  return mask;
}

double ntl_iou(const Image& gt_mask, const Image& det_mask) {
  if (!gt_mask.same_shape(det_mask) || gt_mask.channels != 1)
    throw std::invalid_argument("ntl_iou: mask shape mismatch");
  size_t inter_l = 0, uni_l = 0, inter_b = 0, uni_b = 0;
  for (size_t i = 0; i < gt_mask.data.size(); ++i) {
    bool g = gt_mask.data[i] != 0, d = det_mask.data[i] != 0;
    inter_l += g && d;
    uni_l += g || d;
    inter_b += !g && !d;
    uni_b += !g || !d;
  }
  double il = uni_l > 0 ? static_cast<double>(inter_l) / uni_l : 1.0;
  double ib = uni_b > 0 ? static_cast<double>(inter_b) / uni_b : 1.0;
  return 100 * 0.5 * (il + ib);
}

double feature_frechet(const std::vector<Image>& set_a,
                       const std::vector<Image>& set_b) {
  if (set_a.size() < 2 || set_b.size() < 2)
    throw std::invalid_argument("feature_frechet: each set needs >= 2 frames");
  auto fit = [](const std::vector<Image>& set, Eigen::VectorXd& mu,
                Eigen::MatrixXd& cov) {
    int n = static_cast<int>(set.size());
    Eigen::MatrixXd f(64, n);
    for (int i = 0; i < n; ++i) f.col(i) = train::perceptual_features(set[i]);
    mu = f.rowwise().mean();
    Eigen::MatrixXd centered = f.colwise() - mu;
    cov = centered * centered.transpose() / (n - 1);
  };
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd ca, cb;
  fit(set_a, mu_a, ca);
  fit(set_b, mu_b, cb);

  // Tr((Ca Cb)^{1/2}) through the symmetric sandwich sqrt(Ca) Cb sqrt(Ca),
  // clamping the tiny negative eigenvalues rank deficiency produces
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(ca);
  Eigen::MatrixXd sqrt_ca =
      ea.eigenvectors() *
      ea.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
      ea.eigenvectors().transpose();
  Eigen::MatrixXd m = sqrt_ca * cb * sqrt_ca;
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m);
  // rank-deficient fits leave a cloud of noise eigenvalues around zero whose
  // square roots would otherwise dominate the error; gate them relatively
  double cutoff = 1e-12 * em.eigenvalues().cwiseAbs().maxCoeff();
  double tr_sqrt = 0;
  for (int i = 0; i < em.eigenvalues().size(); ++i)
    if (em.eigenvalues()[i] > cutoff) tr_sqrt += std::sqrt(em.eigenvalues()[i]);

  double d2 = (mu_a - mu_b).squaredNorm() + ca.trace() + cb.trace() -
              2 * tr_sqrt;
  return std::sqrt(std::max(0.0, d2));
}

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  if (a.data.empty()) return 99.0;
  double mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse < 1e-10) return 99.0;
  return 10 * std::log10(1.0 / mse);
}

}  // namespace splat4d::metrics
