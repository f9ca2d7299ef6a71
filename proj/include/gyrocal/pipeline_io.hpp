#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gyrocal/ba_oracle.hpp"
#include "gyrocal/calibrator.hpp"
#include "gyrocal/simulator.hpp"

namespace gyrocal::io {

/// Every tunable of the pipeline. Serialized as a JSON object with the
/// sections "calibrator", "process", "simulator" and "ba"; unknown keys are
/// rejected and omitted keys keep their defaults.
struct RunConfig {
  CalibratorConfig calibrator;
  SimConfig simulator;
  BAOptions ba;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// Gyro log: header `t,wx,wy,wz`, one sample per row, '#' comment lines.
std::vector<GyroSample> parse_gyro_log(std::istream& in, const std::string& source = "<stream>");
std::vector<GyroSample> read_gyro_log(const std::filesystem::path& path);
void write_gyro_log(std::ostream& out, const std::vector<GyroSample>& samples);
void write_gyro_log(const std::filesystem::path& path, const std::vector<GyroSample>& samples);

// Track log: header `t,feature_id,u,v`; rows with identical t form a frame.
std::vector<Frame> parse_track_log(std::istream& in, const std::string& source = "<stream>");
std::vector<Frame> read_track_log(const std::filesystem::path& path);
void write_track_log(std::ostream& out, const std::vector<Frame>& frames);
void write_track_log(const std::filesystem::path& path, const std::vector<Frame>& frames);

RunConfig parse_run_config(const std::string& json_text, const std::string& source = "<string>");
RunConfig read_run_config(const std::filesystem::path& path);
/// Full document with every field, defaults included.
std::string run_config_json(const RunConfig& cfg);

/// Writes the JSON report and the companion trace CSV
/// `t,fx,fy,cx,cy,k1,k2,std_fx,std_fy,std_cx,std_cy,std_k1,std_k2`.
void write_report(const CalibrationReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& trace_path);
std::string report_json(const CalibrationReport& report);
void write_trace_csv(std::ostream& out, const CalibrationReport& report);
CalibrationReport read_report(const std::filesystem::path& path);
CalibrationReport parse_report(const std::string& json_text, const std::string& source = "<string>");

void write_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth read_ground_truth(const std::filesystem::path& path);

/// RMSE table of a Monte Carlo run with per-trial records.
std::string monte_carlo_json(const MonteCarloResult& result, const RunConfig& cfg);

/// Bundle-adjustment refinement written in the report layout, with the
/// refined intrinsics, poses and points plus solver statistics.
std::string refined_report_json(const CalibrationReport& init, const BAProblem& problem,
                                const BASolution& solution, const BAOptions& options);

}  // namespace gyrocal::io
