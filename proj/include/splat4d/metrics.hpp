#pragma once

#include <array>
#include <optional>
#include <vector>

#include "splat4d/geom.hpp"
#include "splat4d/image.hpp"
#include "splat4d/raster.hpp"

namespace splat4d::metrics {

using geom::Box2D;
using geom::Vec2;

// Render-derived detection: for every agent whose weight map reaches tau_w
// somewhere, the tight bounding box of the thresholded pixels, half-open in
// pixel units. Agents that never reach the threshold are omitted.
std::vector<Box2D> detect_agent_boxes(const raster::RenderOutput& render,
                                      double tau_w = 0.3);

// Axis-aligned intersection over union; 0 for disjoint or degenerate boxes.
double iou(const Box2D& a, const Box2D& b);

struct NtaConfig {
  // > 0 fixes the center-distance gate in pixels; otherwise each projected
  // box gates at its own diagonal, adapting to apparent scale
  double fixed_d_thresh = 0;
};

// Agent-placement score for one frame: each projected box contributes the
// IoU against the detection with the nearest center, or 0 when that center
// lies beyond the gate. Frames with nothing projected are vacuous and
// return nothing.
std::optional<double> nta_frame(const std::vector<Box2D>& projected,
                                const std::vector<Box2D>& detected,
                                const NtaConfig& cfg = {});

// Mean of nta_frame over the non-vacuous frames; 1 when all are vacuous.
double nta_iou(const std::vector<std::vector<Box2D>>& projected,
               const std::vector<std::vector<Box2D>>& detected,
               const NtaConfig& cfg = {});

// Hard-edged capsule fill: a pixel is set when its center, at half-integer
// continuous coordinates, lies within stroke/2 of any segment. W x H x 1
// mask of {0,1}.
Image rasterize_lanes(const std::vector<std::array<Vec2, 2>>& lanes2d,
                      int width, int height, double stroke = 3);

// Lane pixels are near-white: min RGB channel >= 0.75.
Image detect_lane_mask(const Image& image);

// 100 * mean of per-class IoU over {lane, background}; a class empty in
// both masks scores 1.
double ntl_iou(const Image& gt_mask, const Image& det_mask);

// Frechet distance between Gaussian fits of the per-frame feature vectors
// (unbiased covariance; each set needs at least 2 frames).
double feature_frechet(const std::vector<Image>& set_a,
                       const std::vector<Image>& set_b);

// 10 log10(1 / MSE) for [0,1] images, 99 dB for near-exact pairs.
double psnr(const Image& a, const Image& b);

struct FrameEval {
  int frame = 0;
  double nta = 1;
  bool nta_vacuous = false;
  double ntl = 100;
  std::optional<double> psnr;
};

struct EvalReport {
  double nta_iou = 0;          // in [0,1]
  double ntl_iou = 0;          // percent
  double ffd = 0;
  std::optional<double> psnr;  // only when ground-truth frames exist
  std::vector<FrameEval> frames;
};

}  // namespace splat4d::metrics
