#include "gyrocal/pipeline_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>
#include <system_error>
#include <utility>

#include "json.hpp"

#include "gyrocal/errors.hpp"

namespace gyrocal::io {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::logic_error("format_double: buffer too small");
  return std::string(buf, end);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void fail(const std::string& source, int line, const std::string& what) {
  throw InputError(source + ":" + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view field, const std::string& source, int line,
                    const char* name) {
  double v = 0.0;
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size())
    fail(source, line, std::string("malformed ") + name + " '" + std::string(field) + "'");
  if (!std::isfinite(v)) fail(source, line, std::string("non-finite ") + name);
  return v;
}

FeatureId parse_id(std::string_view field, const std::string& source, int line) {
  FeatureId v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size())
    fail(source, line, "malformed feature_id '" + std::string(field) + "'");
  return v;
}

/// Calls row(fields, line_number) for each data row after checking the header.
template <class RowFn>
void read_csv(std::istream& in, const std::string& source, std::string_view header, RowFn row) {
  std::string line;
  int line_no = 0;
  bool have_header = false;
  const std::size_t columns = split(header).size();
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = trim(line);
    if (line_no == 1 && s.size() >= 3 && s.substr(0, 3) == "\xEF\xBB\xBF") s.remove_prefix(3);
    if (s.empty() || s.front() == '#') continue;
    if (!have_header) {
      std::string compact;
      for (char c : s)
        if (c != ' ' && c != '\t') compact.push_back(c);
      if (compact != header)
        fail(source, line_no, "expected header '" + std::string(header) + "'");
      have_header = true;
      continue;
    }
    auto fields = split(s);
    if (fields.size() != columns)
      fail(source, line_no,
           "expected " + std::to_string(columns) + " fields, got " + std::to_string(fields.size()));
    row(fields, line_no);
  }
  if (in.bad()) throw InputError(source + ": read error");
  if (!have_header) throw InputError(source + ": missing header '" + std::string(header) + "'");
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw InputError("write failed: " + path.string());
}

std::string read_all(const fs::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- JSON helpers --------------------------------------------------------

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd json_vec(const json& j, Eigen::Index n, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw InputError(what + ": expected an array of " + std::to_string(n) + " numbers");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!j[i].is_number()) throw InputError(what + ": expected numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

json quat_json(const Quaternion& q) { return json::array({q.w, q.x, q.y, q.z}); }

Quaternion json_quat(const json& j, const std::string& what) {
  return Quaternion::from_vector(json_vec(j, 4, what));
}

json pose_json(const Pose& p) { return {{"p", vec_json(p.p)}, {"q", quat_json(p.q)}}; }

Pose json_pose(const json& j, const std::string& what) {
  Pose p;
  p.p = json_vec(j.at("p"), 3, what + ".p");
  p.q = json_quat(j.at("q"), what + ".q");
  return p;
}

constexpr const char* kIntrinsicNames[6] = {"fx", "fy", "cx", "cy", "k1", "k2"};

json intrinsics_json(const Intrinsics::Vector& v) {
  json j = json::object();
  for (int i = 0; i < 6; ++i) j[kIntrinsicNames[i]] = v[i];
  return j;
}

Intrinsics::Vector json_intrinsics(const json& j, const std::string& what) {
  if (!j.is_object()) throw InputError(what + ": expected an object");
  Intrinsics::Vector v;
  for (int i = 0; i < 6; ++i) {
    auto it = j.find(kIntrinsicNames[i]);
    if (it == j.end() || !it->is_number())
      throw InputError(what + ": missing number '" + kIntrinsicNames[i] + "'");
    v[i] = it->get<double>();
  }
  return v;
}

std::string mode_name(DistortionMode m) {
  return m == DistortionMode::kCentered ? "centered" : "literal";
}

DistortionMode parse_mode(const std::string& s, const std::string& what) {
  if (s == "centered") return DistortionMode::kCentered;
  if (s == "literal") return DistortionMode::kLiteral;
  throw InputError(what + ": distortion_mode must be 'centered' or 'literal'");
}

/// Reads keys of one config section into existing values; unknown keys throw.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw InputError("config section '" + name_ + "' must be an object");
  }
  ~Section() = default;

  template <class T>
  Section& field(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      if constexpr (std::is_same_v<T, AngularRate>) {
        out = json_vec(*it, 3, name_ + "." + key);
      } else if constexpr (std::is_same_v<T, DistortionMode>) {
        out = parse_mode(it->template get<std::string>(), name_ + "." + key);
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw InputError(name_ + "." + key + ": expected a boolean");
        out = it->template get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer())
          throw InputError(name_ + "." + key + ": expected an integer");
        out = it->template get<T>();
      } else {
        if (!it->is_number()) throw InputError(name_ + "." + key + ": expected a number");
        out = it->template get<T>();
      }
    } catch (const json::exception& e) {
      throw InputError(name_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw InputError("unknown config key '" + name_ + "." + it.key() + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

json process_json(const ProcessNoiseConfig& p) {
  return {{"accel_spectral_density", p.accel_spectral_density},
          {"gyro_rate_std", p.gyro_rate_std},
          {"gyro_bias", vec_json(p.gyro_bias)}};
}

void read_process(const json& j, ProcessNoiseConfig& p) {
  Section s(j, "process");
  s.field("accel_spectral_density", p.accel_spectral_density)
      .field("gyro_rate_std", p.gyro_rate_std)
      .field("gyro_bias", p.gyro_bias);
  s.done();
}

json calibrator_json(const CalibratorConfig& c) {
  const InitialStds& s = c.init_stds;
  return {{"image_width", c.image_width},
          {"image_height", c.image_height},
          {"pixel_noise_std", c.pixel_noise_std},
          {"gate_chi2_quantile", c.gate_chi2_quantile},
          {"init_focal", c.init_focal},
          {"init_cx", c.init_cx},
          {"init_cy", c.init_cy},
          {"init_stds",
           {{"fx", s.fx},
            {"fy", s.fy},
            {"cx", s.cx},
            {"cy", s.cy},
            {"k1", s.k1},
            {"k2", s.k2},
            {"position", s.position},
            {"velocity", s.velocity},
            {"orientation", s.orientation}}},
          {"feature_init_depth", c.feature_init_depth},
          {"feature_init_std", c.feature_init_std},
          {"correlated_reinit", c.correlated_reinit},
          {"max_features", c.max_features},
          {"max_gap", c.max_gap},
          {"depth_epsilon", c.depth_epsilon},
          {"distortion_mode", mode_name(c.distortion_mode)}};
}

void read_calibrator(const json& j, CalibratorConfig& c) {
  Section s(j, "calibrator");
  s.field("image_width", c.image_width)
      .field("image_height", c.image_height)
      .field("pixel_noise_std", c.pixel_noise_std)
      .field("gate_chi2_quantile", c.gate_chi2_quantile)
      .field("init_focal", c.init_focal)
      .field("init_cx", c.init_cx)
      .field("init_cy", c.init_cy)
      .field("feature_init_depth", c.feature_init_depth)
      .field("feature_init_std", c.feature_init_std)
      .field("correlated_reinit", c.correlated_reinit)
      .field("max_features", c.max_features)
      .field("max_gap", c.max_gap)
      .field("depth_epsilon", c.depth_epsilon)
      .field("distortion_mode", c.distortion_mode);
  if (const json* sj = s.sub("init_stds")) {
    InitialStds& st = c.init_stds;
    Section ss(*sj, "calibrator.init_stds");
    ss.field("fx", st.fx)
        .field("fy", st.fy)
        .field("cx", st.cx)
        .field("cy", st.cy)
        .field("k1", st.k1)
        .field("k2", st.k2)
        .field("position", st.position)
        .field("velocity", st.velocity)
        .field("orientation", st.orientation);
    ss.done();
  }
  s.done();
}

json simulator_json(const SimConfig& c) {
  return {{"n_trials", c.n_trials},
          {"n_features", c.n_features},
          {"grid", c.grid},
          {"grid_spacing", c.grid_spacing},
          {"true_intrinsics", intrinsics_json(c.true_intrinsics.to_vector())},
          {"image_width", c.image_width},
          {"image_height", c.image_height},
          {"distortion_mode", mode_name(c.distortion_mode)},
          {"gyro_rate_hz", c.gyro_rate_hz},
          {"frame_rate_hz", c.frame_rate_hz},
          {"duration_s", c.duration_s},
          {"warmup_s", c.warmup_s},
          {"gyro_noise_std", c.gyro_noise_std},
          {"gyro_bias", vec_json(c.gyro_bias)},
          {"pixel_noise_std", c.pixel_noise_std},
          {"path_radius", c.path_radius},
          {"radius_variation", c.radius_variation},
          {"max_angular_speed", c.max_angular_speed},
          {"max_elevation_deg", c.max_elevation_deg},
          {"look_at_wander", c.look_at_wander},
          {"track_dropout_prob", c.track_dropout_prob},
          {"seed", c.seed}};
}

void read_simulator(const json& j, SimConfig& c) {
  Section s(j, "simulator");
  s.field("n_trials", c.n_trials)
      .field("n_features", c.n_features)
      .field("grid_spacing", c.grid_spacing)
      .field("image_width", c.image_width)
      .field("image_height", c.image_height)
      .field("distortion_mode", c.distortion_mode)
      .field("gyro_rate_hz", c.gyro_rate_hz)
      .field("frame_rate_hz", c.frame_rate_hz)
      .field("duration_s", c.duration_s)
      .field("warmup_s", c.warmup_s)
      .field("gyro_noise_std", c.gyro_noise_std)
      .field("gyro_bias", c.gyro_bias)
      .field("pixel_noise_std", c.pixel_noise_std)
      .field("path_radius", c.path_radius)
      .field("radius_variation", c.radius_variation)
      .field("max_angular_speed", c.max_angular_speed)
      .field("max_elevation_deg", c.max_elevation_deg)
      .field("look_at_wander", c.look_at_wander)
      .field("track_dropout_prob", c.track_dropout_prob)
      .field("seed", c.seed);
  if (const json* g = s.sub("grid")) {
    Eigen::VectorXd v = json_vec(*g, 3, "simulator.grid");
    for (int i = 0; i < 3; ++i) {
      if (v[i] != std::floor(v[i])) throw InputError("simulator.grid: expected integers");
      c.grid[i] = static_cast<int>(v[i]);
    }
  }
  if (const json* ti = s.sub("true_intrinsics")) {
    Section ts(*ti, "simulator.true_intrinsics");
    for (const char* k : kIntrinsicNames) {
      double dummy = 0.0;
      ts.field(k, dummy);
    }
    ts.done();
    Intrinsics::Vector v = c.true_intrinsics.to_vector();
    for (int i = 0; i < 6; ++i)
      if (auto it = ti->find(kIntrinsicNames[i]); it != ti->end()) v[i] = it->get<double>();
    c.true_intrinsics = Intrinsics::from_vector(v);
  }
  s.done();
}

json ba_json(const BAOptions& b) {
  return {{"max_iters", b.max_iters},
          {"tol", b.tol},
          {"optimize_distortion", b.optimize_distortion},
          {"distortion_mode", mode_name(b.distortion_mode)},
          {"depth_epsilon", b.depth_epsilon},
          {"initial_lambda", b.initial_lambda}};
}

void read_ba(const json& j, BAOptions& b) {
  Section s(j, "ba");
  s.field("max_iters", b.max_iters)
      .field("tol", b.tol)
      .field("optimize_distortion", b.optimize_distortion)
      .field("distortion_mode", b.distortion_mode)
      .field("depth_epsilon", b.depth_epsilon)
      .field("initial_lambda", b.initial_lambda);
  s.done();
}

json full_config_json(const RunConfig& cfg) {
  return {{"calibrator", calibrator_json(cfg.calibrator)},
          {"process", process_json(cfg.calibrator.process)},
          {"simulator", simulator_json(cfg.simulator)},
          {"ba", ba_json(cfg.ba)}};
}

json diagnostics_json(const FrameDiagnostics& d) {
  return {{"observed", d.observed},           {"inliers", d.inliers},
          {"gated", d.gated},                 {"reinitialized", d.reinitialized},
          {"lost", d.lost},                   {"unassigned", d.unassigned},
          {"innovation_rms", d.innovation_rms}, {"mean_nis", d.mean_nis},
          {"skipped", d.skipped},             {"rejected", d.rejected}};
}

json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(source + ": " + e.what());
  }
}

}  // namespace

// ---- gyro log --------------------------------------------------------------

std::vector<GyroSample> parse_gyro_log(std::istream& in, const std::string& source) {
  std::vector<GyroSample> out;
  read_csv(in, source, "t,wx,wy,wz", [&](const std::vector<std::string_view>& f, int line) {
    GyroSample s;
    s.t = parse_double(f[0], source, line, "t");
    s.omega = {parse_double(f[1], source, line, "wx"), parse_double(f[2], source, line, "wy"),
               parse_double(f[3], source, line, "wz")};
    if (!out.empty() && !(s.t > out.back().t))
      fail(source, line, "timestamp " + format_double(s.t) + " not after previous " +
                             format_double(out.back().t));
    out.push_back(s);
  });
  return out;
}

std::vector<GyroSample> read_gyro_log(const fs::path& path) {
  auto in = open_in(path);
  return parse_gyro_log(in, path.string());
}

void write_gyro_log(std::ostream& out, const std::vector<GyroSample>& samples) {
  out << "t,wx,wy,wz\n";
  for (const auto& s : samples)
    out << format_double(s.t) << ',' << format_double(s.omega.x()) << ','
        << format_double(s.omega.y()) << ',' << format_double(s.omega.z()) << '\n';
}

void write_gyro_log(const fs::path& path, const std::vector<GyroSample>& samples) {
  auto out = open_out(path);
  write_gyro_log(out, samples);
  finish(out, path);
}

// ---- track log -------------------------------------------------------------

std::vector<Frame> parse_track_log(std::istream& in, const std::string& source) {
  std::vector<Frame> frames;
  std::set<FeatureId> ids;  // ids in the current frame
  read_csv(in, source, "t,feature_id,u,v", [&](const std::vector<std::string_view>& f, int line) {
    double t = parse_double(f[0], source, line, "t");
    FeatureId id = parse_id(f[1], source, line);
    Pixel px{parse_double(f[2], source, line, "u"), parse_double(f[3], source, line, "v")};
    if (frames.empty() || t > frames.back().t) {
      frames.push_back(Frame{t, {}});
      ids.clear();
    } else if (t < frames.back().t) {
      fail(source, line, "timestamp " + format_double(t) + " before previous " +
                             format_double(frames.back().t));
    }
    if (!ids.insert(id).second)
      fail(source, line, "duplicate feature " + std::to_string(id) + " at t=" + format_double(t));
    frames.back().observations.push_back({id, px});
  });
  return frames;
}

std::vector<Frame> read_track_log(const fs::path& path) {
  auto in = open_in(path);
  return parse_track_log(in, path.string());
}

void write_track_log(std::ostream& out, const std::vector<Frame>& frames) {
  out << "t,feature_id,u,v\n";
  for (const auto& f : frames)
    for (const auto& o : f.observations)
      out << format_double(f.t) << ',' << o.id << ',' << format_double(o.pixel.u) << ','
          << format_double(o.pixel.v) << '\n';
}

void write_track_log(const fs::path& path, const std::vector<Frame>& frames) {
  auto out = open_out(path);
  write_track_log(out, frames);
  finish(out, path);
}

// ---- run config ------------------------------------------------------------

RunConfig parse_run_config(const std::string& json_text, const std::string& source) {
  json j = parse_json_text(json_text, source);
  RunConfig cfg;
  try {
    Section top(j, "<root>");
    if (const json* c = top.sub("calibrator")) read_calibrator(*c, cfg.calibrator);
    if (const json* p = top.sub("process")) read_process(*p, cfg.calibrator.process);
    if (const json* s = top.sub("simulator")) read_simulator(*s, cfg.simulator);
    if (const json* b = top.sub("ba")) read_ba(*b, cfg.ba);
    top.done();
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  } catch (const json::exception& e) {
    throw InputError(source + ": " + e.what());
  }
  cfg.calibrator.validate();
  cfg.simulator.validate();
  return cfg;
}

RunConfig read_run_config(const fs::path& path) {
  return parse_run_config(read_all(path), path.string());
}

std::string run_config_json(const RunConfig& cfg) { return full_config_json(cfg).dump(2); }

// ---- report ----------------------------------------------------------------

std::string report_json(const CalibrationReport& r) {
  json frames = json::array();
  for (const auto& f : r.frames)
    frames.push_back({{"t", f.t},
                      {"intrinsics", vec_json(f.intrinsics)},
                      {"std", vec_json(f.stds)},
                      {"pose", pose_json(f.pose)},
                      {"diagnostics", diagnostics_json(f.diagnostics)}});
  json features = json::array();
  for (const auto& [id, z] : r.features) features.push_back({{"id", id}, {"position", vec_json(z)}});
  const Intrinsics::Vector v = r.intrinsics.to_vector();
  json interval = json::object();
  for (int i = 0; i < 6; ++i)
    interval[kIntrinsicNames[i]] = {v[i] - 1.96 * r.stds[i], v[i] + 1.96 * r.stds[i]};
  json doc = {{"format", "gyrocal-report"},
              {"version", 1},
              {"intrinsics", intrinsics_json(v)},
              {"std", intrinsics_json(r.stds)},
              {"interval95", interval},
              {"final_pose", pose_json(r.final_pose)},
              {"counts",
               {{"frames", r.frames.size()},
                {"gyro_samples", r.gyro_samples},
                {"gated", r.total_gated},
                {"reinitialized", r.total_reinitialized},
                {"lost", r.total_lost},
                {"skipped_frames", r.skipped_frames},
                {"rejected_updates", r.rejected_updates}}},
              {"config",
               {{"calibrator", calibrator_json(r.config)}, {"process", process_json(r.config.process)}}},
              {"features", features},
              {"frames", frames}};
  return doc.dump(2);
}

void write_trace_csv(std::ostream& out, const CalibrationReport& r) {
  out << "t,fx,fy,cx,cy,k1,k2,std_fx,std_fy,std_cx,std_cy,std_k1,std_k2\n";
  for (const auto& f : r.frames) {
    out << format_double(f.t);
    for (int i = 0; i < 6; ++i) out << ',' << format_double(f.intrinsics[i]);
    for (int i = 0; i < 6; ++i) out << ',' << format_double(f.stds[i]);
    out << '\n';
  }
}

void write_report(const CalibrationReport& report, const fs::path& json_path,
                  const fs::path& trace_path) {
  auto out = open_out(json_path);
  out << report_json(report) << '\n';
  finish(out, json_path);
  auto trace = open_out(trace_path);
  write_trace_csv(trace, report);
  finish(trace, trace_path);
}

CalibrationReport parse_report(const std::string& json_text, const std::string& source) {
  json j = parse_json_text(json_text, source);
  CalibrationReport r;
  try {
    if (j.value("format", std::string{}) != "gyrocal-report")
      throw InputError("not a calibration report");
    r.intrinsics = Intrinsics::from_vector(json_intrinsics(j.at("intrinsics"), "intrinsics"));
    r.stds = json_intrinsics(j.at("std"), "std");
    r.final_pose = json_pose(j.at("final_pose"), "final_pose");
    const json& c = j.at("counts");
    r.gyro_samples = c.at("gyro_samples").get<int>();
    r.total_gated = c.at("gated").get<int>();
    r.total_reinitialized = c.at("reinitialized").get<int>();
    r.total_lost = c.at("lost").get<int>();
    r.skipped_frames = c.at("skipped_frames").get<int>();
    r.rejected_updates = c.at("rejected_updates").get<int>();
    const json& cfg = j.at("config");
    read_calibrator(cfg.at("calibrator"), r.config);
    read_process(cfg.at("process"), r.config.process);
    for (const auto& f : j.at("features"))
      r.features.emplace_back(f.at("id").get<FeatureId>(), json_vec(f.at("position"), 3, "feature"));
    for (const auto& f : j.at("frames")) {
      FrameRecord rec;
      rec.t = f.at("t").get<double>();
      rec.intrinsics = json_vec(f.at("intrinsics"), 6, "frame intrinsics");
      rec.stds = json_vec(f.at("std"), 6, "frame std");
      rec.pose = json_pose(f.at("pose"), "frame pose");
      rec.diagnostics.t = rec.t;
      if (auto d = f.find("diagnostics"); d != f.end()) {
        rec.diagnostics.observed = d->value("observed", 0);
        rec.diagnostics.inliers = d->value("inliers", 0);
        rec.diagnostics.gated = d->value("gated", 0);
        rec.diagnostics.reinitialized = d->value("reinitialized", 0);
        rec.diagnostics.lost = d->value("lost", 0);
        rec.diagnostics.unassigned = d->value("unassigned", 0);
        rec.diagnostics.innovation_rms = d->value("innovation_rms", 0.0);
        rec.diagnostics.mean_nis = d->value("mean_nis", 0.0);
        rec.diagnostics.skipped = d->value("skipped", false);
        rec.diagnostics.rejected = d->value("rejected", false);
      }
      r.frames.push_back(rec);
    }
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  } catch (const json::exception& e) {
    throw InputError(source + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(source + ": " + e.what());
  }
  return r;
}

CalibrationReport read_report(const fs::path& path) {
  return parse_report(read_all(path), path.string());
}

// ---- ground truth ----------------------------------------------------------

void write_ground_truth(const GroundTruth& truth, const fs::path& path) {
  json points = json::array();
  for (const auto& p : truth.points) points.push_back(vec_json(p));
  json poses = json::array();
  for (std::size_t k = 0; k < truth.poses.size(); ++k)
    poses.push_back({{"t", truth.t[k]},
                     {"p", vec_json(truth.poses[k].p)},
                     {"q", quat_json(truth.poses[k].q)}});
  json doc = {{"format", "gyrocal-groundtruth"},
              {"intrinsics", intrinsics_json(truth.intrinsics.to_vector())},
              {"points", points},
              {"poses", poses}};
  auto out = open_out(path);
  out << doc.dump(1) << '\n';
  finish(out, path);
}

GroundTruth read_ground_truth(const fs::path& path) {
  const std::string source = path.string();
  json j = parse_json_text(read_all(path), source);
  GroundTruth g;
  try {
    if (j.value("format", std::string{}) != "gyrocal-groundtruth")
      throw InputError("not a ground-truth file");
    g.intrinsics = Intrinsics::from_vector(json_intrinsics(j.at("intrinsics"), "intrinsics"));
    for (const auto& p : j.at("points")) g.points.push_back(json_vec(p, 3, "point"));
    for (const auto& p : j.at("poses")) {
      g.t.push_back(p.at("t").get<double>());
      g.poses.push_back(json_pose(p, "pose"));
    }
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  } catch (const json::exception& e) {
    throw InputError(source + ": " + e.what());
  }
  return g;
}

// ---- Monte Carlo / BA output ----------------------------------------------

std::string monte_carlo_json(const MonteCarloResult& result, const RunConfig& cfg) {
  json trials = json::array();
  for (const auto& t : result.trials) {
    json rec = {{"trial", t.trial},
                {"seed", t.seed},
                {"estimate", intrinsics_json(t.estimate.to_vector())},
                {"std", intrinsics_json(t.stds)},
                {"error", intrinsics_json(t.error)},
                {"visibility", t.visibility},
                {"reinitialized", t.reinitialized},
                {"gated", t.gated}};
    if (t.ba_error) rec["ba_error"] = intrinsics_json(*t.ba_error);
    if (t.ba) {
      rec["ba_cost"] = t.ba->cost;
      rec["ba_iterations"] = t.ba->iterations;
      rec["ba_converged"] = t.ba->converged();
    }
    trials.push_back(rec);
  }
  json rmse = {{"initial", intrinsics_json(result.rmse_initial)},
               {"filter", intrinsics_json(result.rmse_filter)}};
  if (result.rmse_ba) rmse["ba"] = intrinsics_json(*result.rmse_ba);
  json doc = {{"format", "gyrocal-montecarlo"},
              {"n_trials", result.trials.size()},
              {"truth", intrinsics_json(result.truth)},
              {"rmse", rmse},
              {"config", full_config_json(cfg)},
              {"trials", trials}};
  return doc.dump(2);
}

std::string refined_report_json(const CalibrationReport& init, const BAProblem& problem,
                                const BASolution& solution, const BAOptions& options) {
  json doc = json::parse(report_json(init));
  doc["format"] = "gyrocal-report";
  doc["intrinsics"] = intrinsics_json(solution.params.intrinsics.to_vector());
  doc["filter_intrinsics"] = intrinsics_json(init.intrinsics.to_vector());
  if (!solution.params.poses.empty()) doc["final_pose"] = pose_json(solution.params.poses.back());
  json features = json::array();
  for (std::size_t i = 0; i < solution.params.points.size(); ++i)
    features.push_back({{"id", problem.point_ids[i]}, {"position", vec_json(solution.params.points[i])}});
  doc["features"] = features;
  json poses = json::array();
  for (std::size_t k = 0; k < solution.params.poses.size(); ++k) {
    json p = pose_json(solution.params.poses[k]);
    p["t"] = problem.frame_times[k];
    poses.push_back(p);
  }
  const char* status = solution.status == BAStatus::kConverged      ? "converged"
                       : solution.status == BAStatus::kMaxIterations ? "max_iterations"
                                                                     : "breakdown";
  const double n_obs = static_cast<double>(problem.observations.size());
  doc["refinement"] = {{"status", status},
                       {"iterations", solution.iterations},
                       {"initial_cost", solution.initial_cost},
                       {"cost", solution.cost},
                       {"rms_px", n_obs > 0 ? std::sqrt(solution.cost / (2.0 * n_obs)) : 0.0},
                       {"observations", problem.observations.size()},
                       {"dropped_observations", problem.dropped_observations},
                       {"options", ba_json(options)},
                       {"poses", poses}};
  return doc.dump(2);
}

}  // namespace gyrocal::io
