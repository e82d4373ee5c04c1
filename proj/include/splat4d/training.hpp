#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "splat4d/geom.hpp"
#include "splat4d/image.hpp"
#include "splat4d/raster.hpp"
#include "splat4d/rng.hpp"
#include "splat4d/scene.hpp"

namespace splat4d::train {

// weights of the mixed objective; ssim enters as dssim * (1 - SSIM)
struct LossWeights {
  double image_l1 = 0.8;
  double depth_l1 = 0.1;
  double dssim = 0.2;
  double novel = 1.0;
  double reg = 1e-3;
};

struct OriFrame {
  double t = 0;
  Image image;
  Image depth;  // sparse, 0 marks unknown
  geom::Pose pose;
};

struct NovelFrame {
  double t = 0;
  Image image;  // no depth supervision on novel views
  geom::Pose pose;
};

// temporally aligned supervision pair: same instant, two camera poses
struct CousinBatch {
  double t = 0;
  OriFrame ori;
  NovelFrame novel;
};

// Mean SSIM over 11x11 Gaussian windows (sigma 1.5), C1 = 1e-4, C2 = 9e-4
// for unit dynamic range, valid windows only, averaged across channels.
// Fills d(ssim)/d(a) when da is given. Throws std::invalid_argument on shape
// mismatch or images smaller than the window.
double ssim(const Image& a, const Image& b, Image* da = nullptr);

struct LossGrad {
  double value = 0;
  Image dimage;
  Image ddepth;  // empty when no depth gradient flows
};

// image_l1 * mean|I_hat - I| + depth_l1 * mean over D>0 of |D_hat - D|
// + dssim * (1 - ssim)
LossGrad loss_ori(const raster::RenderOutput& render, const Image& target_image,
                  const Image& target_depth, const LossWeights& w);

// image terms only; never reads any depth channel
LossGrad loss_novel(const raster::RenderOutput& render,
                    const Image& target_image, const LossWeights& w);

// Fixed two-layer filter bank: 16 seeded 5x5x3 filters, ReLU, 2x2 average
// pool, 16 seeded 5x5x16 filters, ReLU; features are the global mean and
// standard deviation of each post-ReLU channel, both layers, 64 dims total.
// Requires width and height >= 16.
Eigen::VectorXd perceptual_features(const Image& im);
// chain rule of the extractor: d(dfeat . features)/d(image)
Image perceptual_backward(const Image& im, const Eigen::VectorXd& dfeat);
// smallest nonzero |pre-activation| across both layers (infinite when all
// are zero); probes the distance to a live ReLU kink
double perceptual_min_preact(const Image& im);

struct RegGrad {
  double value = 0;
  Image da, db;
};

// L1 distance between the two images' perceptual feature vectors
RegGrad loss_reg(const Image& a, const Image& b);

struct TotalLoss {
  double value = 0, ori = 0, novel = 0, reg = 0;
  Image dimage_ori, ddepth_ori, dimage_novel;
};

// ori + novel * loss_novel + reg * loss_reg; zero-weight terms are skipped
// entirely, so novel = reg = 0 reproduces loss_ori bit for bit
TotalLoss total_loss(const CousinBatch& batch,
                     const raster::RenderOutput& render_ori,
                     const raster::RenderOutput& render_novel,
                     const LossWeights& w);

// Pairs the two streams by timestamp, ascending; throws when the timestamp
// sets differ.
std::vector<CousinBatch> batch_stack(std::vector<OriFrame> ori,
                                     std::vector<NovelFrame> novel);

// the trainer's per-epoch visit order; pull from the same stream to replay
std::vector<size_t> epoch_order(size_t n, Rng& shuffle_stream);

struct TrainConfig {
  int iterations = 2000;
  double lr_position = 1.6e-4;  // decays exponentially to 1/100 over the run
  double lr_rotation = 1e-3;
  double lr_scale = 1e-3;
  double lr_opacity = 1e-3;
  double lr_color = 2.5e-3;
  double lr_temporal = 1e-3;
  uint64_t seed = 0;
  bool cdts_enabled = false;  // train on cousin pairs instead of ori alone
  LossWeights weights;
  raster::RasterConfig raster;
  int checkpoint_every = 0;  // 0 disables
  std::function<void(int, const gauss::GaussianScene&)> on_checkpoint;
};

struct StepLog {
  int step = 0;
  double loss_ori = 0, loss_novel = 0, loss_reg = 0, total = 0;
};

// non-finite loss aborts the run with this
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainData {
  std::vector<OriFrame> ori;
  std::vector<NovelFrame> novel;  // ignored unless cdts_enabled
  geom::CameraModel cam;
};

struct TrainResult {
  gauss::GaussianScene scene;
  std::vector<StepLog> log;
};

// Per-group Adam over the scene arrays, one frame or cousin pair per step,
// epoch order reshuffled from a seed-derived stream. Quaternions are
// renormalized and log-scale/opacity clamped after every step. Deterministic
// given the config.
TrainResult train(const gauss::GaussianScene& init, const TrainData& data,
                  const TrainConfig& cfg);

}  // namespace splat4d::train
