#include "splat4d/io.hpp"

#include <json.hpp>

#include <cstring>
#include <sstream>
#include <stdexcept>

#include "splat4d/image.hpp"

namespace splat4d::io {

using nlohmann::json;

namespace {

json pose_to_json(const geom::Pose& P) {
  return json{{"q", {P.q[0], P.q[1], P.q[2], P.q[3]}},
              {"p", {P.p.x(), P.p.y(), P.p.z()}}};
}

geom::Pose pose_from_json(const json& j) {
  geom::Pose P;
  for (int i = 0; i < 4; ++i) P.q[i] = j.at("q").at(i).get<double>();
  for (int i = 0; i < 3; ++i) P.p[i] = j.at("p").at(i).get<double>();
  return P;
}

void append_f32(std::string& out, double v) {
  float f = static_cast<float>(v);
  char b[4];
  std::memcpy(b, &f, 4);
  out.append(b, 4);
}

void append_u32(std::string& out, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void append_u64(std::string& out, uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

void append_f64(std::string& out, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

struct Cursor {
  const std::string& s;
  size_t at = 0;
  void take(void* dst, size_t n) {
    if (at + n > s.size()) throw std::runtime_error("checkpoint truncated");
    std::memcpy(dst, s.data() + at, n);
    at += n;
  }
  double f32() {
    float f;
    take(&f, 4);
    return f;
  }
  uint32_t u32() {
    uint32_t v;
    take(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    take(&v, 8);
    return v;
  }
  double f64() {
    double v;
    take(&v, 8);
    return v;
  }
  int32_t i32() {
    int32_t v;
    take(&v, 4);
    return v;
  }
};

}  // namespace

void save_trajectory(const std::string& path, const geom::Trajectory& traj) {
  json frames = json::array();
  for (size_t i = 0; i < traj.size(); ++i) {
    json f = pose_to_json(traj.poses[i]);
    f["t"] = traj.t[i];
    frames.push_back(std::move(f));
  }
  json j{{"frame_id", traj.frame_id}, {"frames", std::move(frames)}};
  write_file_atomic(path, j.dump(2) + "\n");
}

geom::Trajectory load_trajectory(const std::string& path) {
  json j = json::parse(read_file(path));
  geom::Trajectory traj;
  traj.frame_id = j.at("frame_id").get<std::string>();
  for (const json& f : j.at("frames")) {
    traj.t.push_back(f.at("t").get<double>());
    traj.poses.push_back(pose_from_json(f));
  }
  return traj;
}

void save_camera(const std::string& path, const geom::CameraModel& cam) {
  json j{{"fx", cam.fx},
         {"fy", cam.fy},
         {"cx", cam.cx},
         {"cy", cam.cy},
         {"w", cam.width},
         {"h", cam.height},
         {"near_clip", cam.near_clip},
         {"ego_to_camera", pose_to_json(cam.ego_to_camera)}};
  write_file_atomic(path, j.dump(2) + "\n");
}

geom::CameraModel load_camera(const std::string& path) {
  json j = json::parse(read_file(path));
  geom::CameraModel cam;
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  cam.width = j.at("w").get<int>();
  cam.height = j.at("h").get<int>();
  cam.near_clip = j.at("near_clip").get<double>();
  cam.ego_to_camera = pose_from_json(j.at("ego_to_camera"));
  return cam;
}

void save_checkpoint(const std::string& path,
                     const gauss::GaussianScene& scene, uint64_t seed) {
  const size_t n = scene.size();
  const int D = scene.degree;
  std::string out;
  out.reserve(24 + n * (14 + 1 + 13 * static_cast<size_t>(D)) * 4);
  out.append("SP4D", 4);
  append_u32(out, 1);
  append_u64(out, n);
  append_u32(out, static_cast<uint32_t>(D));
  append_f64(out, scene.t0);
  for (size_t i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) append_f32(out, scene.pos[3 * i + d]);
    append_f32(out, scene.opacity[i]);
    for (int d = 0; d < 3; ++d) append_f32(out, scene.log_scale[3 * i + d]);
    for (int d = 0; d < 4; ++d) append_f32(out, scene.rot[4 * i + d]);
    for (int d = 0; d < 3; ++d) append_f32(out, scene.color[3 * i + d]);
    append_u32(out, static_cast<uint32_t>(scene.agent_id[i]));
    for (int k = 0; k < 3 * D; ++k) append_f32(out, scene.dpos[3 * D * i + k]);
    for (int k = 0; k < D; ++k) append_f32(out, scene.dopacity[D * i + k]);
    for (int k = 0; k < 3 * D; ++k)
      append_f32(out, scene.dscale[3 * D * i + k]);
    for (int k = 0; k < 3 * D; ++k) append_f32(out, scene.drot[3 * D * i + k]);
    for (int k = 0; k < 3 * D; ++k)
      append_f32(out, scene.dcolor[3 * D * i + k]);
  }
  write_file_atomic(path, out);
  json side{{"format", "sp4d"},
            {"version", 1},
            {"count", n},
            {"degree", D},
            {"t0", scene.t0},
            {"time_range", {scene.t_min, scene.t_max}},
            {"seed", seed}};
  write_file_atomic(path + ".json", side.dump(2) + "\n");
}

gauss::GaussianScene load_checkpoint(const std::string& path) {
  std::string raw = read_file(path);
  Cursor c{raw};
  char magic[4];
  c.take(magic, 4);
  if (std::memcmp(magic, "SP4D", 4) != 0)
    throw std::runtime_error(path + ": not a SP4D checkpoint");
  uint32_t version = c.u32();
  if (version != 1)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));
  uint64_t n = c.u64();
  int D = static_cast<int>(c.u32());
  gauss::GaussianScene scene;
  scene.degree = D;
  scene.t0 = c.f64();
  scene.reserve(n);
  scene.pos.resize(3 * n);
  scene.opacity.resize(n);
  scene.log_scale.resize(3 * n);
  scene.rot.resize(4 * n);
  scene.color.resize(3 * n);
  scene.agent_id.resize(n);
  scene.dpos.resize(3 * D * n);
  scene.dopacity.resize(static_cast<size_t>(D) * n);
  scene.dscale.resize(3 * D * n);
  scene.drot.resize(3 * D * n);
  scene.dcolor.resize(3 * D * n);
  for (size_t i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) scene.pos[3 * i + d] = c.f32();
    scene.opacity[i] = c.f32();
    for (int d = 0; d < 3; ++d) scene.log_scale[3 * i + d] = c.f32();
    for (int d = 0; d < 4; ++d) scene.rot[4 * i + d] = c.f32();
    for (int d = 0; d < 3; ++d) scene.color[3 * i + d] = c.f32();
    scene.agent_id[i] = c.i32();
    for (int k = 0; k < 3 * D; ++k) scene.dpos[3 * D * i + k] = c.f32();
    for (int k = 0; k < D; ++k) scene.dopacity[D * i + k] = c.f32();
    for (int k = 0; k < 3 * D; ++k) scene.dscale[3 * D * i + k] = c.f32();
    for (int k = 0; k < 3 * D; ++k) scene.drot[3 * D * i + k] = c.f32();
    for (int k = 0; k < 3 * D; ++k) scene.dcolor[3 * D * i + k] = c.f32();
  }
  json side = json::parse(read_file(path + ".json"));
  scene.t_min = side.at("time_range").at(0).get<double>();
  scene.t_max = side.at("time_range").at(1).get<double>();
  return scene;
}

std::string scene_config_to_json(const worldgen::SceneConfig& cfg) {
  json j{{"kind", cfg.kind},   {"lanes", cfg.lanes}, {"agents", cfg.agents},
         {"frames", cfg.frames}, {"hz", cfg.hz},     {"seed", cfg.seed}};
  return j.dump(2) + "\n";
}

worldgen::SceneConfig scene_config_from_json(const std::string& text) {
  json j = json::parse(text);
  worldgen::SceneConfig cfg;
  cfg.kind = j.value("kind", cfg.kind);
  cfg.lanes = j.value("lanes", cfg.lanes);
  cfg.agents = j.value("agents", cfg.agents);
  cfg.frames = j.value("frames", cfg.frames);
  cfg.hz = j.value("hz", cfg.hz);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

void save_world(const std::string& dir, const worldgen::WorldScene& world,
                uint64_t seed) {
  save_checkpoint(dir + "/world.sp4d", world.gt_scene, seed);
  json agents = json::object();
  for (const auto& [id, track] : world.agents) {
    json boxes = json::array();
    for (const geom::Box3D& b : track)
      boxes.push_back(
          json{{"center", {b.center.x(), b.center.y(), b.center.z()}},
               {"size", {b.size.x(), b.size.y(), b.size.z()}},
               {"heading", b.heading}});
    agents[std::to_string(id)] = std::move(boxes);
  }
  json lanes = json::array();
  for (const worldgen::Polyline& lane : world.lanes) {
    json pts = json::array();
    for (const geom::Vec3& p : lane.pts)
      pts.push_back({p.x(), p.y(), p.z()});
    lanes.push_back(json{
        {"pts", std::move(pts)},
        {"color", {lane.color.x(), lane.color.y(), lane.color.z()}}});
  }
  json poly = json::array();
  for (const geom::Vec2& p : world.drivable_area)
    poly.push_back({p.x(), p.y()});
  json ego = json::array();
  for (size_t i = 0; i < world.ego_traj.size(); ++i) {
    json f = pose_to_json(world.ego_traj.poses[i]);
    f["t"] = world.ego_traj.t[i];
    ego.push_back(std::move(f));
  }
  json j{{"timestamps", world.timestamps},
         {"agents", std::move(agents)},
         {"lanes", std::move(lanes)},
         {"drivable_area", std::move(poly)},
         {"ego_traj",
          {{"frame_id", world.ego_traj.frame_id}, {"frames", std::move(ego)}}},
         {"M0", pose_to_json(world.M0)},
         {"seed", seed}};
  write_file_atomic(dir + "/world_meta.json", j.dump(2) + "\n");
}

worldgen::WorldScene load_world(const std::string& dir) {
  worldgen::WorldScene world;
  world.gt_scene = load_checkpoint(dir + "/world.sp4d");
  json j = json::parse(read_file(dir + "/world_meta.json"));
  world.timestamps = j.at("timestamps").get<std::vector<double>>();
  for (const auto& [key, boxes] : j.at("agents").items()) {
    int id = std::stoi(key);
    std::vector<geom::Box3D> track;
    for (const json& b : boxes) {
      geom::Box3D box;
      for (int i = 0; i < 3; ++i) {
        box.center[i] = b.at("center").at(i).get<double>();
        box.size[i] = b.at("size").at(i).get<double>();
      }
      box.heading = b.at("heading").get<double>();
      box.agent_id = id;
      track.push_back(box);
    }
    world.agents[id] = std::move(track);
  }
  for (const json& lane : j.at("lanes")) {
    worldgen::Polyline pl;
    for (const json& p : lane.at("pts"))
      pl.pts.push_back(geom::Vec3{p.at(0).get<double>(), p.at(1).get<double>(),
                                  p.at(2).get<double>()});
    for (int i = 0; i < 3; ++i) pl.color[i] = lane.at("color").at(i).get<double>();
    world.lanes.push_back(std::move(pl));
  }
  for (const json& p : j.at("drivable_area"))
    world.drivable_area.push_back(
        geom::Vec2{p.at(0).get<double>(), p.at(1).get<double>()});
  const json& ego = j.at("ego_traj");
  world.ego_traj.frame_id = ego.at("frame_id").get<std::string>();
  for (const json& f : ego.at("frames")) {
    world.ego_traj.t.push_back(f.at("t").get<double>());
    world.ego_traj.poses.push_back(pose_from_json(f));
  }
  world.M0 = pose_from_json(j.at("M0"));
  return world;
}

void save_conditions(const std::string& path,
                     const std::vector<trajgen::ConditionFrame>& frames) {
  std::string out;
  for (const trajgen::ConditionFrame& f : frames) {
    json boxes = json::array();
    for (const geom::Box2D& b : f.boxes2d)
      boxes.push_back(json{{"id", b.agent_id},
                           {"min", {b.lo.x(), b.lo.y()}},
                           {"max", {b.hi.x(), b.hi.y()}}});
    json lanes = json::array();
    for (const auto& seg : f.lanes2d)
      lanes.push_back({{seg[0].x(), seg[0].y()}, {seg[1].x(), seg[1].y()}});
    json line{{"t", f.timestamp},
              {"boxes", std::move(boxes)},
              {"lanes", std::move(lanes)}};
    out += line.dump() + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<trajgen::ConditionFrame> load_conditions(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<trajgen::ConditionFrame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    trajgen::ConditionFrame f;
    f.timestamp = j.at("t").get<double>();
    for (const json& b : j.at("boxes")) {
      geom::Box2D box;
      box.agent_id = b.at("id").get<int>();
      box.lo = geom::Vec2{b.at("min").at(0).get<double>(),
                          b.at("min").at(1).get<double>()};
      box.hi = geom::Vec2{b.at("max").at(0).get<double>(),
                          b.at("max").at(1).get<double>()};
      f.boxes2d.push_back(box);
    }
    for (const json& s : j.at("lanes"))
      f.lanes2d.push_back(
          {geom::Vec2{s.at(0).at(0).get<double>(), s.at(0).at(1).get<double>()},
           geom::Vec2{s.at(1).at(0).get<double>(),
                      s.at(1).at(1).get<double>()}});
    frames.push_back(std::move(f));
  }
  return frames;
}

void save_loss_csv(const std::string& path,
                   const std::vector<train::StepLog>& log) {
  std::ostringstream out;
  out << "step,loss_ori,loss_novel,loss_reg,total\n";
  out.precision(17);
  for (const train::StepLog& s : log)
    out << s.step << ',' << s.loss_ori << ',' << s.loss_novel << ','
        << s.loss_reg << ',' << s.total << '\n';
  write_file_atomic(path, out.str());
}

namespace {

json frame_eval_to_json(const metrics::FrameEval& f) {
  json j{{"frame", f.frame},
         {"nta", f.nta},
         {"nta_vacuous", f.nta_vacuous},
         {"ntl", f.ntl}};
  j["psnr"] = f.psnr ? json(*f.psnr) : json(nullptr);
  return j;
}

}  // namespace

void save_report_json(const std::string& path,
                      const metrics::EvalReport& report) {
  json frames = json::array();
  for (const metrics::FrameEval& f : report.frames)
    frames.push_back(frame_eval_to_json(f));
  json j{{"nta_iou", report.nta_iou},
         {"ntl_iou", report.ntl_iou},
         {"ffd", report.ffd},
         {"psnr", report.psnr ? json(*report.psnr) : json(nullptr)},
         {"frames", std::move(frames)}};
  write_file_atomic(path, j.dump(2) + "\n");
}

metrics::EvalReport load_report_json(const std::string& path) {
  json j = json::parse(read_file(path));
  metrics::EvalReport r;
  r.nta_iou = j.at("nta_iou").get<double>();
  r.ntl_iou = j.at("ntl_iou").get<double>();
  r.ffd = j.at("ffd").get<double>();
  if (!j.at("psnr").is_null()) r.psnr = j.at("psnr").get<double>();
  for (const json& f : j.at("frames")) {
    metrics::FrameEval fe;
    fe.frame = f.at("frame").get<int>();
    fe.nta = f.at("nta").get<double>();
    fe.nta_vacuous = f.at("nta_vacuous").get<bool>();
    fe.ntl = f.at("ntl").get<double>();
    if (!f.at("psnr").is_null()) fe.psnr = f.at("psnr").get<double>();
    r.frames.push_back(fe);
  }
  return r;
}

void save_report_csv(const std::string& path,
                     const metrics::EvalReport& report) {
  std::ostringstream out;
  out << "frame,nta,nta_vacuous,ntl,psnr\n";
  out.precision(17);
  for (const metrics::FrameEval& f : report.frames) {
    out << f.frame << ',' << f.nta << ',' << (f.nta_vacuous ? 1 : 0) << ','
        << f.ntl << ',';
    if (f.psnr) out << *f.psnr;
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

Maneuver parse_maneuver(const std::string& text) {
  Maneuver m;
  if (text == "lane_change") {
    m.kind = "lane_change";
    return m;
  }
  size_t colon = text.find(':');
  std::string kind = text.substr(0, colon);
  if ((kind != "accel" && kind != "decel") || colon == std::string::npos)
    throw std::invalid_argument("bad maneuver '" + text +
                                "' (want lane_change, accel:F, or decel:F)");
  m.kind = kind;
  try {
    m.factor = std::stod(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad maneuver factor in '" + text + "'");
  }
  if (!(m.factor > 0))
    throw std::invalid_argument("maneuver factor must be > 0, got " + text);
  return m;
}

std::string maneuver_tag(const Maneuver& m) {
  if (m.kind == "lane_change") return m.kind;
  std::ostringstream out;
  out << m.kind << '_' << m.factor;
  return out.str();
}

std::string experiment_to_json(const ExperimentConfig& cfg) {
  json maneuvers = json::array();
  for (const Maneuver& m : cfg.maneuvers) {
    if (m.kind == "lane_change")
      maneuvers.push_back(m.kind);
    else
      maneuvers.push_back(m.kind + ":" + std::to_string(m.factor));
  }
  json j{{"scene", json::parse(scene_config_to_json(cfg.scene))},
         {"maneuvers", std::move(maneuvers)},
         {"degrade",
          {{"blur_sigma", cfg.degrade.blur_sigma},
           {"noise_sigma", cfg.degrade.noise_sigma}}},
         {"train", json::parse(train_config_to_json(cfg.train))},
         {"seed", cfg.seed}};
  return j.dump(2) + "\n";
}

ExperimentConfig experiment_from_json(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig cfg;
  if (j.contains("scene")) cfg.scene = scene_config_from_json(j["scene"].dump());
  for (const json& m : j.value("maneuvers", json::array()))
    cfg.maneuvers.push_back(parse_maneuver(m.get<std::string>()));
  if (j.contains("degrade")) {
    cfg.degrade.blur_sigma = j["degrade"].value("blur_sigma", 0.0);
    cfg.degrade.noise_sigma = j["degrade"].value("noise_sigma", 0.0);
  }
  if (j.contains("train"))
    cfg.train = train_config_from_json(j["train"].dump());
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

train::TrainConfig train_config_from_json(const std::string& text) {
  json j = json::parse(text);
  train::TrainConfig cfg;
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.lr_position = j.value("lr_position", cfg.lr_position);
  cfg.lr_rotation = j.value("lr_rotation", cfg.lr_rotation);
  cfg.lr_scale = j.value("lr_scale", cfg.lr_scale);
  cfg.lr_opacity = j.value("lr_opacity", cfg.lr_opacity);
  cfg.lr_color = j.value("lr_color", cfg.lr_color);
  cfg.lr_temporal = j.value("lr_temporal", cfg.lr_temporal);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  if (j.contains("weights")) {
    const json& w = j["weights"];
    cfg.weights.image_l1 = w.value("image_l1", cfg.weights.image_l1);
    cfg.weights.depth_l1 = w.value("depth_l1", cfg.weights.depth_l1);
    cfg.weights.dssim = w.value("dssim", cfg.weights.dssim);
    cfg.weights.novel = w.value("novel", cfg.weights.novel);
    cfg.weights.reg = w.value("reg", cfg.weights.reg);
  }
  return cfg;
}

std::string train_config_to_json(const train::TrainConfig& cfg) {
  json j{{"iterations", cfg.iterations},
         {"lr_position", cfg.lr_position},
         {"lr_rotation", cfg.lr_rotation},
         {"lr_scale", cfg.lr_scale},
         {"lr_opacity", cfg.lr_opacity},
         {"lr_color", cfg.lr_color},
         {"lr_temporal", cfg.lr_temporal},
         {"checkpoint_every", cfg.checkpoint_every},
         {"weights",
          {{"image_l1", cfg.weights.image_l1},
           {"depth_l1", cfg.weights.depth_l1},
           {"dssim", cfg.weights.dssim},
           {"novel", cfg.weights.novel},
           {"reg", cfg.weights.reg}}}};
  return j.dump(2) + "\n";
}

}  // namespace splat4d::io
