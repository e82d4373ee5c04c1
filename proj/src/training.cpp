#include "splat4d/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace splat4d::train {

using geom::Vec4;

namespace {

constexpr int kWin = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 1e-4;
constexpr double kC2 = 9e-4;

const std::array<double, kWin * kWin>& ssim_kernel() {
  static const std::array<double, kWin * kWin> k = [] {
    std::array<double, kWin * kWin> w{};
    double sum = 0;
    for (int j = 0; j < kWin; ++j)
      for (int i = 0; i < kWin; ++i) {
        double dx = i - kWin / 2, dy = j - kWin / 2;
        w[j * kWin + i] = std::exp(-(dx * dx + dy * dy) / (2 * kSsimSigma * kSsimSigma));
        sum += w[j * kWin + i];
      }
    for (double& v : w) v /= sum;
    return w;
  }();
  return k;
}

double sgn(double x) { return (x > 0) - (x < 0); }

// ---------------------------------------------------------------- perceptual

constexpr int kC0 = 3;    // input channels
constexpr int kF = 16;    // filters per layer
constexpr int kK = 5;     // kernel side
constexpr int kMinSide = 16;

struct FilterBank {
  // [out][in][ky][kx], flat
  std::vector<double> k1;  // kF * kC0 * kK * kK
  std::vector<double> k2;  // kF * kF * kK * kK
};

const FilterBank& filter_bank() {
  static const FilterBank bank = [] {
    FilterBank b;
    Rng rng(77003);
    b.k1.resize(kF * kC0 * kK * kK);
    for (double& v : b.k1) v = rng.normal();
    b.k2.resize(kF * kF * kK * kK);
    for (double& v : b.k2) v = rng.normal();
    return b;
  }();
  return bank;
}

// everything the backward pass needs from one extractor run
struct PerceptualTrace {
  int w1 = 0, h1 = 0;  // layer-1 map size
  int w2 = 0, h2 = 0;  // pooled size
  int w3 = 0, h3 = 0;  // layer-2 map size
  std::vector<double> y1, r1;  // kF planes each, plane-major
  std::vector<double> pool;
  std::vector<double> y2, r2;
  Eigen::VectorXd feat;
};

void channel_stats(const double* plane, int n, double* mean, double* stdev) {
  double m = 0;
  for (int i = 0; i < n; ++i) m += plane[i];
  m /= n;
  double v = 0;
  for (int i = 0; i < n; ++i) v += (plane[i] - m) * (plane[i] - m);
  *mean = m;
  *stdev = std::sqrt(v / n);
}

PerceptualTrace perceptual_forward(const Image& im) {
  if (im.channels != kC0)
    throw std::invalid_argument("perceptual_features: expected a 3-channel image");
  if (im.width < kMinSide || im.height < kMinSide)
    throw std::invalid_argument("perceptual_features: image must be at least 16x16");
  const FilterBank& fb = filter_bank();

  PerceptualTrace tr;
  tr.w1 = im.width - (kK - 1);
  tr.h1 = im.height - (kK - 1);
  int n1 = tr.w1 * tr.h1;
  tr.y1.assign(static_cast<size_t>(kF) * n1, 0.0);
  for (int o = 0; o < kF; ++o) {
    double* plane = tr.y1.data() + static_cast<size_t>(o) * n1;
    const double* kf = fb.k1.data() + static_cast<size_t>(o) * kC0 * kK * kK;
    for (int v = 0; v < tr.h1; ++v)
      for (int u = 0; u < tr.w1; ++u) {
        double acc = 0;
        for (int c = 0; c < kC0; ++c)
          for (int ky = 0; ky < kK; ++ky)
            for (int kx = 0; kx < kK; ++kx)
              acc += kf[(c * kK + ky) * kK + kx] * im.at(u + kx, v + ky, c);
        plane[v * tr.w1 + u] = acc;
      }
  }
  tr.r1 = tr.y1;
  for (double& v : tr.r1) v = std::max(v, 0.0);

  tr.w2 = tr.w1 / 2;
  tr.h2 = tr.h1 / 2;
  int n2 = tr.w2 * tr.h2;
  tr.pool.assign(static_cast<size_t>(kF) * n2, 0.0);
  for (int o = 0; o < kF; ++o) {
    const double* src = tr.r1.data() + static_cast<size_t>(o) * n1;
    double* dst = tr.pool.data() + static_cast<size_t>(o) * n2;
    for (int v = 0; v < tr.h2; ++v)
      for (int u = 0; u < tr.w2; ++u)
        dst[v * tr.w2 + u] = 0.25 * (src[(2 * v) * tr.w1 + 2 * u] +
                                     src[(2 * v) * tr.w1 + 2 * u + 1] +
                                     src[(2 * v + 1) * tr.w1 + 2 * u] +
                                     src[(2 * v + 1) * tr.w1 + 2 * u + 1]);
  }

  tr.w3 = tr.w2 - (kK - 1);
  tr.h3 = tr.h2 - (kK - 1);
  int n3 = tr.w3 * tr.h3;
  tr.y2.assign(static_cast<size_t>(kF) * n3, 0.0);
  for (int q = 0; q < kF; ++q) {
    double* plane = tr.y2.data() + static_cast<size_t>(q) * n3;
    const double* kf = fb.k2.data() + static_cast<size_t>(q) * kF * kK * kK;
    for (int v = 0; v < tr.h3; ++v)
      for (int u = 0; u < tr.w3; ++u) {
        double acc = 0;
        for (int o = 0; o < kF; ++o) {
          const double* src = tr.pool.data() + static_cast<size_t>(o) * n2;
          for (int ky = 0; ky < kK; ++ky)
            for (int kx = 0; kx < kK; ++kx)
              acc += kf[(o * kK + ky) * kK + kx] * src[(v + ky) * tr.w2 + (u + kx)];
        }
        plane[v * tr.w3 + u] = acc;
      }
  }
  tr.r2 = tr.y2;
  for (double& v : tr.r2) v = std::max(v, 0.0);

  tr.feat.resize(4 * kF);
  for (int o = 0; o < kF; ++o)
    channel_stats(tr.r1.data() + static_cast<size_t>(o) * n1, n1, &tr.feat[o],
                  &tr.feat[kF + o]);
  for (int q = 0; q < kF; ++q)
    channel_stats(tr.r2.data() + static_cast<size_t>(q) * n3, n3,
                  &tr.feat[2 * kF + q], &tr.feat[3 * kF + q]);
  return tr;
}

Image perceptual_backward_trace(const Image& im, const PerceptualTrace& tr,
                                const Eigen::VectorXd& dfeat) {
  const FilterBank& fb = filter_bank();
  int n1 = tr.w1 * tr.h1, n2 = tr.w2 * tr.h2, n3 = tr.w3 * tr.h3;

  // stats -> post-ReLU maps; d(std)/dx = (x - mean) / (n * std), 0 when flat
  std::vector<double> dr2(static_cast<size_t>(kF) * n3, 0.0);
  for (int q = 0; q < kF; ++q) {
    double gm = dfeat[2 * kF + q], gs = dfeat[3 * kF + q];
    double m = tr.feat[2 * kF + q], s = tr.feat[3 * kF + q];
    const double* r = tr.r2.data() + static_cast<size_t>(q) * n3;
    double* d = dr2.data() + static_cast<size_t>(q) * n3;
    for (int i = 0; i < n3; ++i) {
      d[i] = gm / n3;
      if (s > 0) d[i] += gs * (r[i] - m) / (n3 * s);
    }
  }
  std::vector<double> dr1(static_cast<size_t>(kF) * n1, 0.0);
  for (int o = 0; o < kF; ++o) {
    double gm = dfeat[o], gs = dfeat[kF + o];
    double m = tr.feat[o], s = tr.feat[kF + o];
    const double* r = tr.r1.data() + static_cast<size_t>(o) * n1;
    double* d = dr1.data() + static_cast<size_t>(o) * n1;
    for (int i = 0; i < n1; ++i) {
      d[i] = gm / n1;
      if (s > 0) d[i] += gs * (r[i] - m) / (n1 * s);
    }
  }

  // layer 2 conv transpose into the pooled maps
  std::vector<double> dpool(static_cast<size_t>(kF) * n2, 0.0);
  for (int q = 0; q < kF; ++q) {
    const double* kf = fb.k2.data() + static_cast<size_t>(q) * kF * kK * kK;
    const double* y = tr.y2.data() + static_cast<size_t>(q) * n3;
    const double* d = dr2.data() + static_cast<size_t>(q) * n3;
    for (int v = 0; v < tr.h3; ++v)
      for (int u = 0; u < tr.w3; ++u) {
        double g = (y[v * tr.w3 + u] > 0) ? d[v * tr.w3 + u] : 0.0;
        if (g == 0) continue;
        for (int o = 0; o < kF; ++o) {
          double* dst = dpool.data() + static_cast<size_t>(o) * n2;
          for (int ky = 0; ky < kK; ++ky)
            for (int kx = 0; kx < kK; ++kx)
              dst[(v + ky) * tr.w2 + (u + kx)] += g * kf[(o * kK + ky) * kK + kx];
        }
      }
  }

  // pool backward spreads evenly over its 2x2 source
  for (int o = 0; o < kF; ++o) {
    const double* src = dpool.data() + static_cast<size_t>(o) * n2;
    double* dst = dr1.data() + static_cast<size_t>(o) * n1;
    for (int v = 0; v < tr.h2; ++v)
      for (int u = 0; u < tr.w2; ++u) {
        double g = 0.25 * src[v * tr.w2 + u];
        dst[(2 * v) * tr.w1 + 2 * u] += g;
        dst[(2 * v) * tr.w1 + 2 * u + 1] += g;
        dst[(2 * v + 1) * tr.w1 + 2 * u] += g;
        dst[(2 * v + 1) * tr.w1 + 2 * u + 1] += g;
      }
  }

  Image dim = Image::zeros(im.width, im.height, im.channels);
  for (int o = 0; o < kF; ++o) {
    const double* kf = fb.k1.data() + static_cast<size_t>(o) * kC0 * kK * kK;
    const double* y = tr.y1.data() + static_cast<size_t>(o) * n1;
    const double* d = dr1.data() + static_cast<size_t>(o) * n1;
    for (int v = 0; v < tr.h1; ++v)
      for (int u = 0; u < tr.w1; ++u) {
        double g = (y[v * tr.w1 + u] > 0) ? d[v * tr.w1 + u] : 0.0;
        if (g == 0) continue;
        for (int c = 0; c < kC0; ++c)
          for (int ky = 0; ky < kK; ++ky)
            for (int kx = 0; kx < kK; ++kx)
              dim.at(u + kx, v + ky, c) += g * kf[(c * kK + ky) * kK + kx];
      }
  }
  return dim;
}

void check_same_shape(const Image& a, const Image& b, const char* who) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

// -------------------------------------------------------------------- adam

struct AdamState {
  std::vector<double> m, v;
};

void adam_update(std::vector<double>& p, const std::vector<double>& g,
                 AdamState& st, double lr, int t) {
  if (st.m.size() != p.size()) {
    st.m.assign(p.size(), 0.0);
    st.v.assign(p.size(), 0.0);
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double c1 = 1.0 - std::pow(b1, t);
  double c2 = 1.0 - std::pow(b2, t);
  for (size_t i = 0; i < p.size(); ++i) {
    st.m[i] = b1 * st.m[i] + (1 - b1) * g[i];
    st.v[i] = b2 * st.v[i] + (1 - b2) * g[i] * g[i];
    p[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps);
  }
}

}  // namespace

double ssim(const Image& a, const Image& b, Image* da) {
  check_same_shape(a, b, "ssim");
  if (a.width < kWin || a.height < kWin)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const auto& ker = ssim_kernel();
  if (da) *da = Image::zeros(a.width, a.height, a.channels);

  double total = 0;
  size_t nwin = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int cy = 0; cy + kWin <= a.height; ++cy)
      for (int cx = 0; cx + kWin <= a.width; ++cx) {
        double ma = 0, mb = 0, paa = 0, pbb = 0, pab = 0;
        for (int j = 0; j < kWin; ++j)
          for (int i = 0; i < kWin; ++i) {
            double w = ker[j * kWin + i];
            double va = a.at(cx + i, cy + j, c), vb = b.at(cx + i, cy + j, c);
            ma += w * va;
            mb += w * vb;
            paa += w * va * va;
            pbb += w * vb * vb;
            pab += w * va * vb;
          }
        double sa = paa - ma * ma, sb = pbb - mb * mb, sab = pab - ma * mb;
        double a1 = 2 * ma * mb + kC1, a2 = 2 * sab + kC2;
        double b1 = ma * ma + mb * mb + kC1, b2 = sa + sb + kC2;
        double d = b1 * b2;
        double s = a1 * a2 / d;
        total += s;
        ++nwin;
        if (da) {
          double gmu = 2 * (mb * a2 - s * ma * b2) / d;
          double gva = -s / b2;
          double gcov = 2 * a1 / d;
          for (int j = 0; j < kWin; ++j)
            for (int i = 0; i < kWin; ++i) {
              double w = ker[j * kWin + i];
              double va = a.at(cx + i, cy + j, c), vb = b.at(cx + i, cy + j, c);
              da->at(cx + i, cy + j, c) +=
                  w * (gmu + 2 * gva * (va - ma) + gcov * (vb - mb));
            }
        }
      }
  if (da)
    for (double& v : da->data) v /= static_cast<double>(nwin);
  return total / static_cast<double>(nwin);
}

LossGrad loss_ori(const raster::RenderOutput& render, const Image& target_image,
                  const Image& target_depth, const LossWeights& w) {
  check_same_shape(render.image, target_image, "loss_ori");
  LossGrad out;
  out.dimage = Image::zeros(render.image.width, render.image.height,
                            render.image.channels);

  if (w.image_l1 > 0) {
    double n = static_cast<double>(render.image.size());
    double l1 = 0;
    for (size_t i = 0; i < render.image.data.size(); ++i) {
      double d = render.image.data[i] - target_image.data[i];
      l1 += std::fabs(d);
      out.dimage.data[i] += w.image_l1 * sgn(d) / n;
    }
    out.value += w.image_l1 * l1 / n;
  }

  if (w.depth_l1 > 0) {
    check_same_shape(render.depth, target_depth, "loss_ori depth");
    size_t nmask = 0;
    for (double v : target_depth.data) nmask += v > 0;
    if (nmask > 0) {
      out.ddepth = Image::zeros(render.depth.width, render.depth.height, 1);
      double l1 = 0;
      for (size_t i = 0; i < render.depth.data.size(); ++i) {
        if (target_depth.data[i] <= 0) continue;
        double d = render.depth.data[i] - target_depth.data[i];
        l1 += std::fabs(d);
        out.ddepth.data[i] = w.depth_l1 * sgn(d) / static_cast<double>(nmask);
      }
      out.value += w.depth_l1 * l1 / static_cast<double>(nmask);
    }
  }

  if (w.dssim > 0) {
    Image ds;
    double s = ssim(render.image, target_image, &ds);
    out.value += w.dssim * (1.0 - s);
    for (size_t i = 0; i < out.dimage.data.size(); ++i)
      out.dimage.data[i] -= w.dssim * ds.data[i];
  }
  return out;
}

LossGrad loss_novel(const raster::RenderOutput& render,
                    const Image& target_image, const LossWeights& w) {
  check_same_shape(render.image, target_image, "loss_novel");
  LossGrad out;
  out.dimage = Image::zeros(render.image.width, render.image.height,
                            render.image.channels);
  if (w.image_l1 > 0) {
    double n = static_cast<double>(render.image.size());
    double l1 = 0;
    for (size_t i = 0; i < render.image.data.size(); ++i) {
      double d = render.image.data[i] - target_image.data[i];
      l1 += std::fabs(d);
      out.dimage.data[i] += w.image_l1 * sgn(d) / n;
    }
    out.value += w.image_l1 * l1 / n;
  }
  if (w.dssim > 0) {
    Image ds;
    double s = ssim(render.image, target_image, &ds);
    out.value += w.dssim * (1.0 - s);
    for (size_t i = 0; i < out.dimage.data.size(); ++i)
      out.dimage.data[i] -= w.dssim * ds.data[i];
  }
  return out;
}

Eigen::VectorXd perceptual_features(const Image& im) {
  return perceptual_forward(im).feat;
}

Image perceptual_backward(const Image& im, const Eigen::VectorXd& dfeat) {
  if (dfeat.size() != 4 * kF)
    throw std::invalid_argument("perceptual_backward: expected 64 cotangents");
  return perceptual_backward_trace(im, perceptual_forward(im), dfeat);
}

double perceptual_min_preact(const Image& im) {
  PerceptualTrace tr = perceptual_forward(im);
  // exact zeros come from untouched black regions and sit stably on the
  // ReLU kink, so only nonzero values measure the distance to it
  double best = std::numeric_limits<double>::infinity();
  for (double v : tr.y1)
    if (v != 0) best = std::min(best, std::fabs(v));
  for (double v : tr.y2)
    if (v != 0) best = std::min(best, std::fabs(v));
  return best;
}

RegGrad loss_reg(const Image& a, const Image& b) {
  PerceptualTrace ta = perceptual_forward(a);
  PerceptualTrace tb = perceptual_forward(b);
  RegGrad out;
  Eigen::VectorXd sign(ta.feat.size());
  for (int i = 0; i < ta.feat.size(); ++i) {
    double d = ta.feat[i] - tb.feat[i];
    out.value += std::fabs(d);
    sign[i] = sgn(d);
  }
  out.da = perceptual_backward_trace(a, ta, sign);
  out.db = perceptual_backward_trace(b, tb, -sign);
  return out;
}

TotalLoss total_loss(const CousinBatch& batch,
                     const raster::RenderOutput& render_ori,
                     const raster::RenderOutput& render_novel,
                     const LossWeights& w) {
  TotalLoss out;
  LossGrad lo = loss_ori(render_ori, batch.ori.image, batch.ori.depth, w);
  out.ori = lo.value;
  out.dimage_ori = std::move(lo.dimage);
  out.ddepth_ori = std::move(lo.ddepth);

  if (w.novel > 0) {
    LossGrad ln = loss_novel(render_novel, batch.novel.image, w);
    out.novel = ln.value;
    out.dimage_novel = std::move(ln.dimage);
    for (double& v : out.dimage_novel.data) v *= w.novel;
  }
  if (w.reg > 0) {
    RegGrad lr = loss_reg(render_ori.image, render_novel.image);
    out.reg = lr.value;
    for (size_t i = 0; i < out.dimage_ori.data.size(); ++i)
      out.dimage_ori.data[i] += w.reg * lr.da.data[i];
    if (out.dimage_novel.size() == 0)
      out.dimage_novel = Image::zeros(render_novel.image.width,
                                      render_novel.image.height,
                                      render_novel.image.channels);
    for (size_t i = 0; i < out.dimage_novel.data.size(); ++i)
      out.dimage_novel.data[i] += w.reg * lr.db.data[i];
  }
  out.value = out.ori + w.novel * out.novel + w.reg * out.reg;
  return out;
}

std::vector<CousinBatch> batch_stack(std::vector<OriFrame> ori,
                                     std::vector<NovelFrame> novel) {
  if (ori.size() != novel.size())
    throw std::invalid_argument("batch_stack: stream lengths differ");
  if (ori.empty()) throw std::invalid_argument("batch_stack: empty streams");
  std::stable_sort(ori.begin(), ori.end(),
                   [](const OriFrame& a, const OriFrame& b) { return a.t < b.t; });
  std::stable_sort(novel.begin(), novel.end(),
                   [](const NovelFrame& a, const NovelFrame& b) { return a.t < b.t; });
  std::vector<CousinBatch> out(ori.size());
  for (size_t i = 0; i < ori.size(); ++i) {
    if (std::fabs(ori[i].t - novel[i].t) > 1e-9)
      throw std::invalid_argument("batch_stack: timestamp sets differ at index " +
                                  std::to_string(i));
    out[i].t = ori[i].t;
    out[i].ori = std::move(ori[i]);
    out[i].novel = std::move(novel[i]);
  }
  return out;
}

std::vector<size_t> epoch_order(size_t n, Rng& shuffle_stream) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  shuffle_stream.shuffle(idx);
  return idx;
}

TrainResult train(const gauss::GaussianScene& init, const TrainData& data,
                  const TrainConfig& cfg) {
  if (init.size() == 0) throw std::invalid_argument("train: empty scene");
  if (data.ori.empty()) throw std::invalid_argument("train: no original frames");
  if (cfg.iterations <= 0) throw std::invalid_argument("train: iterations must be > 0");
  for (double lr : {cfg.lr_position, cfg.lr_rotation, cfg.lr_scale,
                    cfg.lr_opacity, cfg.lr_color, cfg.lr_temporal})
    if (!(lr > 0)) throw std::invalid_argument("train: learning rates must be > 0");
  const LossWeights& w = cfg.weights;
  for (double x : {w.image_l1, w.depth_l1, w.dssim, w.novel, w.reg})
    if (x < 0) throw std::invalid_argument("train: loss weights must be >= 0");

  std::vector<CousinBatch> batches;
  std::vector<OriFrame> frames;
  size_t n;
  if (cfg.cdts_enabled) {
    batches = batch_stack(data.ori, data.novel);
    n = batches.size();
  } else {
    frames = data.ori;
    std::stable_sort(frames.begin(), frames.end(),
                     [](const OriFrame& a, const OriFrame& b) { return a.t < b.t; });
    n = frames.size();
  }
  // rendering both cousin views is pointless when neither term has weight
  bool use_novel = cfg.cdts_enabled && (w.novel > 0 || w.reg > 0);

  TrainResult res;
  res.scene = init;
  gauss::GaussianScene& scene = res.scene;
  Rng shuffle_rng(subsystem_seed(cfg.seed, "epoch-shuffle"));
  std::vector<size_t> order;

  AdamState st_pos, st_rot, st_scale, st_op, st_col;
  AdamState st_dpos, st_dop, st_dscale, st_drot, st_dcol;
  const double lr_decay = 0.01;  // position rate shrinks 100x over the run

  for (int step = 0; step < cfg.iterations; ++step) {
    if (step % static_cast<int>(n) == 0) order = epoch_order(n, shuffle_rng);
    size_t idx = order[step % n];

    StepLog log;
    log.step = step;
    double t;
    geom::Pose pose_ori;
    TotalLoss tl;
    if (cfg.cdts_enabled) {
      const CousinBatch& batch = batches[idx];
      t = batch.t;
      pose_ori = batch.ori.pose;
      raster::RenderOutput r_ori =
          raster::splat_forward(scene, t, pose_ori, data.cam, cfg.raster);
      if (use_novel) {
        raster::RenderOutput r_novel = raster::splat_forward(
            scene, t, batch.novel.pose, data.cam, cfg.raster);
        tl = total_loss(batch, r_ori, r_novel, w);
      } else {
        LossGrad lo = loss_ori(r_ori, batch.ori.image, batch.ori.depth, w);
        tl.value = tl.ori = lo.value;
        tl.dimage_ori = std::move(lo.dimage);
        tl.ddepth_ori = std::move(lo.ddepth);
      }
    } else {
      const OriFrame& frame = frames[idx];
      t = frame.t;
      pose_ori = frame.pose;
      raster::RenderOutput r =
          raster::splat_forward(scene, t, frame.pose, data.cam, cfg.raster);
      LossGrad lo = loss_ori(r, frame.image, frame.depth, w);
      tl.value = tl.ori = lo.value;
      tl.dimage_ori = std::move(lo.dimage);
      tl.ddepth_ori = std::move(lo.ddepth);
    }
    log.loss_ori = tl.ori;
    log.loss_novel = tl.novel;
    log.loss_reg = tl.reg;
    log.total = tl.value;
    if (!std::isfinite(tl.value))
      throw DivergenceError("train: non-finite loss at step " + std::to_string(step));

    gauss::SceneGrads grads = raster::splat_backward(
        scene, t, pose_ori, data.cam, cfg.raster, tl.dimage_ori, tl.ddepth_ori);
    if (use_novel) {
      const CousinBatch& batch = batches[idx];
      gauss::SceneGrads gn =
          raster::splat_backward(scene, t, batch.novel.pose, data.cam,
                                 cfg.raster, tl.dimage_novel, Image{});
      grads.accumulate(gn);
    }

    int at = step + 1;
    double lr_pos = cfg.lr_position *
                    std::pow(lr_decay, static_cast<double>(step) /
                                           std::max(1, cfg.iterations - 1));
    adam_update(scene.pos, grads.pos, st_pos, lr_pos, at);
    adam_update(scene.rot, grads.rot, st_rot, cfg.lr_rotation, at);
    adam_update(scene.log_scale, grads.log_scale, st_scale, cfg.lr_scale, at);
    adam_update(scene.opacity, grads.opacity, st_op, cfg.lr_opacity, at);
    adam_update(scene.color, grads.color, st_col, cfg.lr_color, at);
    adam_update(scene.dpos, grads.dpos, st_dpos, cfg.lr_temporal, at);
    adam_update(scene.dopacity, grads.dopacity, st_dop, cfg.lr_temporal, at);
    adam_update(scene.dscale, grads.dscale, st_dscale, cfg.lr_temporal, at);
    adam_update(scene.drot, grads.drot, st_drot, cfg.lr_temporal, at);
    adam_update(scene.dcolor, grads.dcolor, st_dcol, cfg.lr_temporal, at);

    // projection is a no-op on already-unit quaternions so a zero-gradient
    // step leaves every parameter bit untouched
    for (size_t i = 0; i < scene.size(); ++i) {
      Eigen::Map<Vec4> q(scene.rot.data() + 4 * i);
      double nq = q.norm();
      if (nq <= 1e-12)
        q = Vec4{1, 0, 0, 0};
      else if (std::fabs(nq - 1.0) > 1e-12)
        q /= nq;
    }
    double ls_lo = std::log(gauss::kScaleMin), ls_hi = std::log(gauss::kScaleMax);
    for (double& v : scene.log_scale) v = std::clamp(v, ls_lo, ls_hi);
    for (double& v : scene.opacity) v = std::clamp(v, -12.0, 12.0);

    res.log.push_back(log);
    if (cfg.checkpoint_every > 0 && cfg.on_checkpoint &&
        (step + 1) % cfg.checkpoint_every == 0)
      cfg.on_checkpoint(step + 1, scene);
  }
  return res;
}

}  // namespace splat4d::train
