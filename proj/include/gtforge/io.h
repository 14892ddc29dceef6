#pragma once

#include <map>
#include <string>
#include <vector>

#include "gtforge/preintegration.h"
#include "gtforge/spline.h"
#include "gtforge/trajectory.h"

// File formats: imu.csv, mocap.csv, TUM trajectory text, and the
// key = value config format. On-disk quaternions are scalar-last
// (x y z w, TUM convention); in-memory storage is scalar-first.

namespace gtforge {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};
struct ParseError : IoError {
  ParseError(const std::string& path, int line, const std::string& what)
      : IoError(path + ":" + std::to_string(line) + ": " + what), line_number(line) {}
  int line_number;
};
struct NonMonotoneTimeError : IoError {
  NonMonotoneTimeError(const std::string& path, int line)
      : IoError(path + ":" + std::to_string(line) +
                ": non-monotone timestamp (remedy: sort or deduplicate rows)"),
        line_number(line) {}
  int line_number;
};

struct CsvReadStats {
  int rows_rejected = 0;  // rows dropped for bad quaternion norm
};

// imu.csv: header "t,ax,ay,az,wx,wy,wz" (s, m/s^2, rad/s).
std::vector<ImuSample> read_imu_csv(const std::string& path);
void write_imu_csv(const std::string& path, const std::vector<ImuSample>& samples);

// mocap.csv: header "t,px,py,pz,qx,qy,qz,qw". Quaternions within 1e-3 of
// unit norm are renormalized; worse rows are rejected and counted.
std::vector<MoCapSample> read_mocap_csv(const std::string& path,
                                        CsvReadStats* stats = nullptr);
void write_mocap_csv(const std::string& path, const std::vector<MoCapSample>& samples);

// TUM trajectory text: "timestamp tx ty tz qx qy qz qw", 9 significant
// digits, '#' comment lines skipped on read.
void write_tum(const std::string& path, const Trajectory& traj);
Trajectory read_tum(const std::string& path);

// Structured plain-text config: "key = value" lines grouped in
// "[section]" blocks; '#' comments. Keys are reported as "section.key".
class ConfigFile {
 public:
  ConfigFile() = default;
  static ConfigFile load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace gtforge
