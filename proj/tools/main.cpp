#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "splat4d/geom.hpp"
#include "splat4d/image.hpp"
#include "splat4d/io.hpp"
#include "splat4d/metrics.hpp"
#include "splat4d/raster.hpp"
#include "splat4d/rng.hpp"
#include "splat4d/scene.hpp"
#include "splat4d/training.hpp"
#include "splat4d/trajgen.hpp"
#include "splat4d/worldgen.hpp"

namespace fs = std::filesystem;
using namespace splat4d;

namespace {

// trajectory infeasibility, distinct from plain runtime errors so the exit
// code can say 3 instead of 2
struct Infeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

geom::CameraModel default_camera() {
  geom::CameraModel cam;
  cam.fx = cam.fy = 70;
  cam.width = 96;
  cam.height = 64;
  cam.cx = cam.width / 2.0;
  cam.cy = cam.height / 2.0;
  cam.ego_to_camera = geom::default_ego_to_camera();
  // mounted 1.6 m above the ego origin; near clip culls ground pancakes
  // whose grazing projections would veil the image
  cam.ego_to_camera.p =
      -(geom::rotation_matrix(cam.ego_to_camera) * geom::Vec3{0, 0, 1.6});
  cam.near_clip = 3.0;
  return cam;
}

int resolve_threads(int n) {
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

std::string frame_name(const char* stem, int k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, k, ext);
  return buf;
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
  std::string config_path;
  std::string out;
  uint64_t seed = 7;
  double lidar_dropout = 0.5;
  int threads = 1;
};

void cmd_synth(const SynthArgs& a) {
  worldgen::SceneConfig cfg;
  if (!a.config_path.empty())
    cfg = io::scene_config_from_json(read_file(a.config_path));
  fs::create_directories(a.out + "/world");
  fs::create_directories(a.out + "/ori");
  write_file_atomic(a.out + "/scene_config.json", io::scene_config_to_json(cfg));

  worldgen::WorldScene world = worldgen::synth_scene(cfg, cfg.seed);
  io::save_world(a.out + "/world", world, cfg.seed);

  geom::CameraModel cam = default_camera();
  io::save_camera(a.out + "/camera.json", cam);

  raster::RasterConfig rcfg;
  rcfg.threads = resolve_threads(a.threads);
  std::vector<Image> frames =
      worldgen::oracle_render(world, world.ego_traj, cam, std::nullopt, rcfg);
  std::vector<Image> depth =
      worldgen::lidar_depth(world, world.ego_traj, cam, a.lidar_dropout,
                            subsystem_seed(a.seed, "lidar"), rcfg);
  for (size_t k = 0; k < frames.size(); ++k) {
    save_ppm(a.out + "/ori/" + frame_name("frame", static_cast<int>(k), "ppm"),
             frames[k]);
    save_depth(
        a.out + "/ori/" + frame_name("depth", static_cast<int>(k), "dpth"),
        depth[k]);
  }
  io::save_trajectory(a.out + "/ori/trajectory.json",
                      worldgen::to_scene_frame(world, world.ego_traj));
}

// -------------------------------------------------------------- propose ----

struct ProposeArgs {
  std::string out;
  std::string maneuver;
  uint64_t seed = 7;
  double max_offset = 0.1;
  double blur = 0.5;
  double noise = 0.01;
  int threads = 1;
};

void cmd_propose(const ProposeArgs& a) {
  io::Maneuver m = io::parse_maneuver(a.maneuver);
  worldgen::WorldScene world = io::load_world(a.out + "/world");
  geom::CameraModel cam = io::load_camera(a.out + "/camera.json");
  geom::Trajectory ego = io::load_trajectory(a.out + "/ori/trajectory.json");

  geom::Trajectory novel;
  if (m.kind == "lane_change") {
    try {
      novel = trajgen::propose_lane_change(ego, trajgen::safety_context(world),
                                           a.max_offset,
                                           subsystem_seed(a.seed, "propose"));
    } catch (const std::runtime_error& e) {
      throw Infeasible(e.what());
    }
  } else {
    // factor scales displacement directly; decel conventionally uses F < 1
    novel = trajgen::propose_speed_change(ego, m.factor);
  }

  std::string dir = a.out + "/novel_" + io::maneuver_tag(m);
  fs::create_directories(dir);
  io::save_trajectory(dir + "/trajectory.json", novel);
  io::save_conditions(dir + "/conditions.jsonl",
                      trajgen::build_conditions(novel, world, cam));

  // the synthetic world stands in for the video generator: render the novel
  // view and degrade it like an imperfect generation
  worldgen::DegradeSpec degrade;
  degrade.blur_sigma = a.blur;
  degrade.noise_sigma = a.noise;
  degrade.seed = subsystem_seed(a.seed, "degrade");
  raster::RasterConfig rcfg;
  rcfg.threads = resolve_threads(a.threads);
  std::vector<Image> frames =
      worldgen::oracle_render(world, novel, cam, degrade, rcfg);
  for (size_t k = 0; k < frames.size(); ++k)
    save_ppm(dir + "/" + frame_name("frame", static_cast<int>(k), "ppm"),
             frames[k]);
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
  std::string out;
  std::string mode = "baseline";
  std::string maneuver;  // cdts only: which novel set to mix in
  std::string config_path;
  uint64_t seed = 7;
  int prims = 1200;
  double init_noise = 0.2;
  int threads = 1;
};

// Seeds the optimization from the sparse depth maps: unproject every known
// depth pixel, carry its color, tag it with the oracle's agent weight, and
// pull agent samples back to their t0 box pose so one rigid body's samples
// agree in time.
gauss::GaussianScene init_scene(const worldgen::WorldScene& world,
                                const std::vector<train::OriFrame>& ori,
                                const std::vector<Image>& depths,
                                const geom::CameraModel& cam, int n_prims,
                                double noise, uint64_t seed,
                                const raster::RasterConfig& rcfg) {
  struct Sample {
    geom::Vec3 pos;
    geom::Vec3 color;
    int agent_id;
  };
  std::vector<Sample> samples;
  geom::Pose cam_to_ego = geom::pose_inverse(cam.ego_to_camera);
  for (size_t k = 0; k < ori.size(); ++k) {
    raster::RenderOutput oracle = raster::splat_forward(
        world.gt_scene, ori[k].t, ori[k].pose, cam, rcfg);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        double z = depths[k].at(x, y, 0);
        if (z <= 0) continue;
        geom::Vec3 pc{(x + 0.5 - cam.cx) / cam.fx * z,
                      (y + 0.5 - cam.cy) / cam.fy * z, z};
        Sample s;
        s.pos = geom::apply(ori[k].pose, geom::apply(cam_to_ego, pc));
        s.color = geom::Vec3{ori[k].image.at(x, y, 0), ori[k].image.at(x, y, 1),
                             ori[k].image.at(x, y, 2)};
        s.agent_id = 0;
        for (const auto& [id, w] : oracle.agent_weights)
          if (w.at(x, y, 0) >= 0.5) s.agent_id = id;
        if (s.agent_id != 0) {
          // rigid pullback: where this surface point sat at t0
          const std::vector<geom::Box3D>& track = world.agents.at(s.agent_id);
          const geom::Box3D& now = track[k];
          const geom::Box3D& first = track[0];
          Eigen::Matrix3d Rn =
              Eigen::AngleAxisd(now.heading, geom::Vec3::UnitZ())
                  .toRotationMatrix();
          Eigen::Matrix3d R0 =
              Eigen::AngleAxisd(first.heading, geom::Vec3::UnitZ())
                  .toRotationMatrix();
          s.pos = R0 * Rn.transpose() * (s.pos - now.center) + first.center;
        }
        samples.push_back(s);
      }
  }
  if (samples.empty()) throw std::runtime_error("no depth samples to init from");

  Rng rng(subsystem_seed(seed, "init"));
  gauss::GaussianScene scene;
  scene.degree = world.gt_scene.degree;
  scene.t0 = world.gt_scene.t0;
  scene.t_min = world.gt_scene.t_min;
  scene.t_max = world.gt_scene.t_max;
  scene.reserve(n_prims);
  for (int i = 0; i < n_prims; ++i) {
    const Sample& s = samples[static_cast<size_t>(rng.uniform() * samples.size()) %
                              samples.size()];
    gauss::GaussianPrimitive g;
    for (int d = 0; d < 3; ++d) g.position[d] = s.pos[d] + noise * rng.normal();
    g.opacity_logit = 0.0;
    double base = std::log(0.25);
    g.log_scale = geom::Vec3{base, base, base};
    g.rotation = geom::Vec4{1, 0, 0, 0};
    for (int d = 0; d < 3; ++d) {
      double c = std::clamp(s.color[d], 0.02, 0.98);
      g.color_logit[d] = std::log(c / (1.0 - c));
    }
    g.agent_id = s.agent_id;
    g.temporal = gauss::TemporalCoeffs::zero(scene.degree);
    scene.add(g);
  }
  return scene;
}

struct LoadedOri {
  std::vector<train::OriFrame> frames;
  std::vector<Image> depths;
};

LoadedOri load_ori(const std::string& out, const geom::Trajectory& traj) {
  LoadedOri d;
  for (size_t k = 0; k < traj.size(); ++k) {
    train::OriFrame f;
    f.t = traj.t[k];
    f.pose = traj.poses[k];
    f.image = load_ppm(out + "/ori/" + frame_name("frame", static_cast<int>(k), "ppm"));
    f.depth = load_depth(out + "/ori/" + frame_name("depth", static_cast<int>(k), "dpth"));
    d.depths.push_back(f.depth);
    d.frames.push_back(std::move(f));
  }
  return d;
}

void cmd_train(const TrainArgs& a) {
  if (a.mode != "baseline" && a.mode != "cdts")
    throw std::invalid_argument("mode must be baseline or cdts");
  worldgen::WorldScene world = io::load_world(a.out + "/world");
  geom::CameraModel cam = io::load_camera(a.out + "/camera.json");
  geom::Trajectory ego = io::load_trajectory(a.out + "/ori/trajectory.json");

  train::TrainConfig cfg;
  if (!a.config_path.empty())
    cfg = io::train_config_from_json(read_file(a.config_path));
  cfg.seed = subsystem_seed(a.seed, "train");
  cfg.cdts_enabled = a.mode == "cdts";
  cfg.raster.threads = resolve_threads(a.threads);

  LoadedOri ori = load_ori(a.out, ego);
  train::TrainData data;
  data.cam = cam;
  data.ori = ori.frames;

  std::string dir = a.out + "/train_" + a.mode;
  if (cfg.cdts_enabled) {
    if (a.maneuver.empty())
      throw std::invalid_argument("cdts mode needs --maneuver to pick the novel set");
    io::Maneuver m = io::parse_maneuver(a.maneuver);
    std::string novel_dir = a.out + "/novel_" + io::maneuver_tag(m);
    if (!fs::exists(novel_dir + "/trajectory.json"))
      throw std::invalid_argument(novel_dir + " missing; run propose first");
    geom::Trajectory novel = io::load_trajectory(novel_dir + "/trajectory.json");
    for (size_t k = 0; k < novel.size(); ++k) {
      train::NovelFrame f;
      f.t = novel.t[k];
      f.pose = novel.poses[k];
      f.image = load_ppm(novel_dir + "/" +
                         frame_name("frame", static_cast<int>(k), "ppm"));
      data.novel.push_back(std::move(f));
    }
    dir += "_" + io::maneuver_tag(m);
  }
  fs::create_directories(dir);
  write_file_atomic(dir + "/train_config.json", io::train_config_to_json(cfg));

  gauss::GaussianScene init =
      init_scene(world, data.ori, ori.depths, cam, a.prims, a.init_noise,
                 a.seed, cfg.raster);
  if (cfg.checkpoint_every > 0)
    cfg.on_checkpoint = [&dir, &a](int step, const gauss::GaussianScene& s) {
      io::save_checkpoint(dir + "/" + frame_name("checkpoint", step, "sp4d"),
                          s, a.seed);
    };

  train::TrainResult result = train::train(init, data, cfg);
  io::save_checkpoint(dir + "/checkpoint.sp4d", result.scene, a.seed);
  io::save_loss_csv(dir + "/loss.csv", result.log);
}

// ----------------------------------------------------------------- eval ----

struct EvalArgs {
  std::string out;
  std::string mode = "baseline";
  std::string maneuver;
  std::string checkpoint;  // overrides the mode-derived path
  int threads = 1;
};

metrics::EvalReport eval_one(const gauss::GaussianScene& scene,
                             const worldgen::WorldScene& world,
                             const geom::CameraModel& cam,
                             const geom::Trajectory& novel,
                             const std::vector<Image>& ori_frames,
                             const raster::RasterConfig& rcfg) {
  std::vector<std::vector<geom::Box2D>> projected, detected;
  std::vector<Image> renders;
  metrics::EvalReport report;
  double psnr_sum = 0;
  for (size_t k = 0; k < novel.size(); ++k) {
    raster::RenderOutput r =
        raster::splat_forward(scene, novel.t[k], novel.poses[k], cam, rcfg);
    renders.push_back(r.image);

    std::vector<geom::Box2D> proj;
    for (const auto& [id, track] : world.agents)
      if (auto b = geom::project_box(track[k], novel.poses[k], cam)) {
        b->agent_id = id;
        proj.push_back(*b);
      }
    std::vector<geom::Box2D> det = metrics::detect_agent_boxes(r);
    metrics::FrameEval fe;
    fe.frame = static_cast<int>(k);
    std::optional<double> nta = metrics::nta_frame(proj, det, {});
    fe.nta_vacuous = !nta.has_value();
    if (nta) fe.nta = *nta;
    projected.push_back(std::move(proj));
    detected.push_back(std::move(det));

    std::vector<std::array<geom::Vec2, 2>> segs;
    for (const worldgen::Polyline& lane : world.lanes) {
      auto s = geom::project_polyline(lane.pts, novel.poses[k], cam);
      segs.insert(segs.end(), s.begin(), s.end());
    }
    Image gt_lanes = metrics::rasterize_lanes(segs, cam.width, cam.height);
    fe.ntl = metrics::ntl_iou(gt_lanes, metrics::detect_lane_mask(r.image));

    raster::RenderOutput truth = raster::splat_forward(
        world.gt_scene, novel.t[k], novel.poses[k], cam, rcfg);
    fe.psnr = metrics::psnr(truth.image, r.image);
    psnr_sum += *fe.psnr;
    report.frames.push_back(fe);
  }
  report.nta_iou = metrics::nta_iou(projected, detected, {});
  double ntl_sum = 0;
  for (const metrics::FrameEval& f : report.frames) ntl_sum += f.ntl;
  report.ntl_iou = report.frames.empty() ? 0 : ntl_sum / report.frames.size();
  report.ffd = metrics::feature_frechet(renders, ori_frames);
  if (!report.frames.empty()) report.psnr = psnr_sum / report.frames.size();
  return report;
}

void print_summary_header() {
  std::printf("%-14s %-10s %8s %8s %8s %8s\n", "maneuver", "mode", "NTA-IoU",
              "NTL-IoU", "FFD", "PSNR");
}

void print_summary_row(const std::string& maneuver, const std::string& mode,
                       const metrics::EvalReport& r) {
  std::printf("%-14s %-10s %8.4f %8.2f %8.4f %8.2f\n", maneuver.c_str(),
              mode.c_str(), r.nta_iou, r.ntl_iou, r.ffd,
              r.psnr ? *r.psnr : 0.0);
}

metrics::EvalReport run_eval(const EvalArgs& a) {
  io::Maneuver m = io::parse_maneuver(a.maneuver);
  std::string tag = io::maneuver_tag(m);
  worldgen::WorldScene world = io::load_world(a.out + "/world");
  geom::CameraModel cam = io::load_camera(a.out + "/camera.json");
  geom::Trajectory novel =
      io::load_trajectory(a.out + "/novel_" + tag + "/trajectory.json");

  std::string ckpt = a.checkpoint;
  if (ckpt.empty()) {
    ckpt = a.out + "/train_" + a.mode;
    if (a.mode == "cdts") ckpt += "_" + tag;
    ckpt += "/checkpoint.sp4d";
  }
  gauss::GaussianScene scene = io::load_checkpoint(ckpt);

  std::vector<Image> ori_frames;
  for (size_t k = 0; k < world.timestamps.size(); ++k)
    ori_frames.push_back(load_ppm(
        a.out + "/ori/" + frame_name("frame", static_cast<int>(k), "ppm")));

  raster::RasterConfig rcfg;
  rcfg.threads = resolve_threads(a.threads);
  metrics::EvalReport report =
      eval_one(scene, world, cam, novel, ori_frames, rcfg);

  std::string dir = a.out + "/eval_" + a.mode + "_" + tag;
  fs::create_directories(dir);
  io::save_report_json(dir + "/report.json", report);
  io::save_report_csv(dir + "/report.csv", report);
  return report;
}

void cmd_eval(const EvalArgs& a) {
  metrics::EvalReport report = run_eval(a);
  print_summary_header();
  print_summary_row(io::maneuver_tag(io::parse_maneuver(a.maneuver)), a.mode,
                    report);
}

// ---------------------------------------------------------------- render ----

struct RenderArgs {
  std::string checkpoint;
  std::string trajectory;
  std::string camera;
  std::string out;
  int threads = 1;
};

void cmd_render(const RenderArgs& a) {
  gauss::GaussianScene scene = io::load_checkpoint(a.checkpoint);
  geom::Trajectory traj = io::load_trajectory(a.trajectory);
  if (traj.frame_id == "world")
    throw std::invalid_argument(
        "render expects a scene-frame trajectory, not world");
  geom::CameraModel cam = io::load_camera(a.camera);
  raster::RasterConfig rcfg;
  rcfg.threads = resolve_threads(a.threads);
  fs::create_directories(a.out);
  for (size_t k = 0; k < traj.size(); ++k) {
    raster::RenderOutput r =
        raster::splat_forward(scene, traj.t[k], traj.poses[k], cam, rcfg);
    save_ppm(a.out + "/" + frame_name("frame", static_cast<int>(k), "ppm"),
             r.image);
  }
}

// ------------------------------------------------------------ experiment ----

struct ExperimentArgs {
  std::string config_path;
  std::string out;
  std::optional<uint64_t> seed;
  int threads = 1;
};

void cmd_experiment(const ExperimentArgs& a) {
  io::ExperimentConfig cfg = io::experiment_from_json(read_file(a.config_path));
  if (a.seed) cfg.seed = *a.seed;
  fs::create_directories(a.out);
  write_file_atomic(a.out + "/experiment_config.json",
                    io::experiment_to_json(cfg));

  SynthArgs synth;
  synth.out = a.out;
  synth.seed = cfg.seed;
  synth.threads = a.threads;
  // scene identity comes from the scene config; write it through
  write_file_atomic(a.out + "/scene_config_in.json",
                    io::scene_config_to_json(cfg.scene));
  synth.config_path = a.out + "/scene_config_in.json";
  cmd_synth(synth);

  for (const io::Maneuver& m : cfg.maneuvers) {
    ProposeArgs prop;
    prop.out = a.out;
    prop.maneuver =
        m.kind == "lane_change" ? m.kind : m.kind + ":" + std::to_string(m.factor);
    prop.seed = cfg.seed;
    prop.blur = cfg.degrade.blur_sigma;
    prop.noise = cfg.degrade.noise_sigma;
    prop.threads = a.threads;
    cmd_propose(prop);
  }

  std::string train_cfg_path = a.out + "/train_config_in.json";
  write_file_atomic(train_cfg_path, io::train_config_to_json(cfg.train));

  TrainArgs base;
  base.out = a.out;
  base.mode = "baseline";
  base.config_path = train_cfg_path;
  base.seed = cfg.seed;
  base.threads = a.threads;
  cmd_train(base);

  print_summary_header();
  for (const io::Maneuver& m : cfg.maneuvers) {
    std::string mtext =
        m.kind == "lane_change" ? m.kind : m.kind + ":" + std::to_string(m.factor);
    TrainArgs cdts = base;
    cdts.mode = "cdts";
    cdts.maneuver = mtext;
    cmd_train(cdts);

    for (const char* mode : {"baseline", "cdts"}) {
      EvalArgs ev;
      ev.out = a.out;
      ev.mode = mode;
      ev.maneuver = mtext;
      ev.threads = a.threads;
      print_summary_row(io::maneuver_tag(m), mode, run_eval(ev));
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale 4D Gaussian splatting with cousin-pair training"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* s = app.add_subcommand("synth", "build a synthetic world and its ground-truth drive");
  s->add_option("--config", synth.config_path, "SceneConfig JSON");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--seed", synth.seed, "top-level seed");
  s->add_option("--lidar-dropout", synth.lidar_dropout, "sparse depth dropout");
  s->add_option("--threads", synth.threads, "0 = auto");

  ProposeArgs prop;
  CLI::App* p = app.add_subcommand("propose", "propose a novel trajectory and synthesize its supervision");
  p->add_option("--out", prop.out, "experiment directory (from synth)")->required();
  p->add_option("--maneuver", prop.maneuver, "lane_change | accel:F | decel:F")->required();
  p->add_option("--seed", prop.seed, "top-level seed");
  p->add_option("--max-offset", prop.max_offset, "lane-change initial offset bound");
  p->add_option("--blur", prop.blur, "degradation blur sigma (px)");
  p->add_option("--noise", prop.noise, "degradation noise sigma");
  p->add_option("--threads", prop.threads, "0 = auto");

  TrainArgs tr;
  CLI::App* t = app.add_subcommand("train", "fit a deformable Gaussian scene");
  t->add_option("--out", tr.out, "experiment directory")->required();
  t->add_option("--mode", tr.mode, "baseline | cdts")->required();
  t->add_option("--maneuver", tr.maneuver, "novel set for cdts");
  t->add_option("--config", tr.config_path, "TrainConfig JSON");
  t->add_option("--seed", tr.seed, "top-level seed");
  t->add_option("--prims", tr.prims, "primitive budget");
  t->add_option("--init-noise", tr.init_noise, "init position jitter (m)");
  t->add_option("--threads", tr.threads, "0 = auto");

  EvalArgs ev;
  CLI::App* e = app.add_subcommand("eval", "score a checkpoint on a novel trajectory");
  e->add_option("--out", ev.out, "experiment directory")->required();
  e->add_option("--mode", ev.mode, "baseline | cdts (names the checkpoint)");
  e->add_option("--maneuver", ev.maneuver, "which novel trajectory")->required();
  e->add_option("--checkpoint", ev.checkpoint, "explicit checkpoint path");
  e->add_option("--threads", ev.threads, "0 = auto");

  RenderArgs rd;
  CLI::App* r = app.add_subcommand("render", "render a checkpoint along a trajectory");
  r->add_option("--checkpoint", rd.checkpoint)->required();
  r->add_option("--trajectory", rd.trajectory)->required();
  r->add_option("--camera", rd.camera)->required();
  r->add_option("--out", rd.out, "frame directory")->required();
  r->add_option("--threads", rd.threads, "0 = auto");

  ExperimentArgs ex;
  CLI::App* x = app.add_subcommand("experiment", "full pipeline: synth, propose, train both modes, eval");
  x->add_option("--config", ex.config_path, "ExperimentConfig JSON")->required();
  x->add_option("--out", ex.out, "output directory")->required();
  uint64_t ex_seed = 0;
  CLI::Option* seed_opt = x->add_option("--seed", ex_seed, "override config seed");
  x->add_option("--threads", ex.threads, "0 = auto");

  try {
    app.parse(argc, argv);
    if (*seed_opt) ex.seed = ex_seed;
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    std::fprintf(stderr, "%s\n", err.what());
    return 2;
  }

  try {
    if (s->parsed()) cmd_synth(synth);
    if (p->parsed()) cmd_propose(prop);
    if (t->parsed()) cmd_train(tr);
    if (e->parsed()) cmd_eval(ev);
    if (r->parsed()) cmd_render(rd);
    if (x->parsed()) cmd_experiment(ex);
  } catch (const Infeasible& err) {
    std::fprintf(stderr, "infeasible trajectory: %s\n", err.what());
    return 3;
  } catch (const train::DivergenceError& err) {
    std::fprintf(stderr, "training diverged: %s\n", err.what());
    return 4;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  }
  return 0;
}
