#include "gtforge/io.h"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gtforge {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_numbers(const std::string& line, char sep,
                                  const std::string& path, int lineno) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string tok;
  while (sep == ' ' ? static_cast<bool>(ss >> tok) : static_cast<bool>(std::getline(ss, tok, sep))) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ParseError(path, lineno,
                       "cannot parse '" + tok + "' as a number (remedy: fix the row)");
    }
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for reading: " + path);
  return f;
}

void format9(std::ofstream& f, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  f << buf;
}

}  // namespace

std::vector<ImuSample> read_imu_csv(const std::string& path) {
  std::ifstream f = open_in(path);
  std::vector<ImuSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && line.rfind("t,", 0) == 0) continue;  // header
    const auto v = parse_numbers(line, ',', path, lineno);
    if (v.size() != 7) {
      throw ParseError(path, lineno, "expected 7 columns t,ax,ay,az,wx,wy,wz");
    }
    ImuSample s;
    s.t = v[0];
    s.accel = Vec3(v[1], v[2], v[3]);
    s.gyro = Vec3(v[4], v[5], v[6]);
    if (!out.empty() && s.t <= out.back().t) {
      throw NonMonotoneTimeError(path, lineno);
    }
    out.push_back(s);
  }
  return out;
}

void write_imu_csv(const std::string& path, const std::vector<ImuSample>& samples) {
  std::ofstream f = open_out(path);
  f << "t,ax,ay,az,wx,wy,wz\n";
  for (const auto& s : samples) {
    const double vals[7] = {s.t, s.accel.x(), s.accel.y(), s.accel.z(),
                            s.gyro.x(), s.gyro.y(), s.gyro.z()};
    for (int i = 0; i < 7; ++i) {
      if (i) f << ',';
      format9(f, vals[i]);
    }
    f << '\n';
  }
}

std::vector<MoCapSample> read_mocap_csv(const std::string& path, CsvReadStats* stats) {
  std::ifstream f = open_in(path);
  std::vector<MoCapSample> out;
  std::string line;
  int lineno = 0;
  int rejected = 0;
  while (std::getline(f, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && line.rfind("t,", 0) == 0) continue;
    const auto v = parse_numbers(line, ',', path, lineno);
    if (v.size() != 8) {
      throw ParseError(path, lineno, "expected 8 columns t,px,py,pz,qx,qy,qz,qw");
    }
    MoCapSample s;
    s.tau = v[0];
    // Disk is scalar-last (x y z w); memory is scalar-first.
    Quat q(v[7], v[4], v[5], v[6]);
    if (std::abs(q.norm() - 1.0) > 1e-3) {
      ++rejected;
      continue;
    }
    s.pose = Pose(q.normalized(), Vec3(v[1], v[2], v[3]));
    if (!out.empty() && s.tau <= out.back().tau) {
      throw NonMonotoneTimeError(path, lineno);
    }
    out.push_back(s);
  }
  if (stats) stats->rows_rejected = rejected;
  return out;
}

void write_mocap_csv(const std::string& path, const std::vector<MoCapSample>& samples) {
  std::ofstream f = open_out(path);
  f << "t,px,py,pz,qx,qy,qz,qw\n";
  for (const auto& s : samples) {
    const Quat& q = s.pose.rotation;
    const double vals[8] = {s.tau, s.pose.translation.x(), s.pose.translation.y(),
                            s.pose.translation.z(), q.x(), q.y(), q.z(), q.w()};
    for (int i = 0; i < 8; ++i) {
      if (i) f << ',';
      format9(f, vals[i]);
    }
    f << '\n';
  }
}

void write_tum(const std::string& path, const Trajectory& traj) {
  std::ofstream f = open_out(path);
  for (const auto& s : traj) {
    const Quat& q = s.pose.rotation;
    const double vals[8] = {s.t, s.pose.translation.x(), s.pose.translation.y(),
                            s.pose.translation.z(), q.x(), q.y(), q.z(), q.w()};
    for (int i = 0; i < 8; ++i) {
      if (i) f << ' ';
      format9(f, vals[i]);
    }
    f << '\n';
  }
}

Trajectory read_tum(const std::string& path) {
  std::ifstream f = open_in(path);
  Trajectory out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto v = parse_numbers(line, ' ', path, lineno);
    if (v.size() != 8) {
      throw ParseError(path, lineno, "expected 8 fields t tx ty tz qx qy qz qw");
    }
    TrajectorySample s;
    s.t = v[0];
    s.pose = Pose(Quat(v[7], v[4], v[5], v[6]).normalized(), Vec3(v[1], v[2], v[3]));
    if (!out.empty() && s.t <= out.back().t) {
      throw NonMonotoneTimeError(path, lineno);
    }
    out.push_back(s);
  }
  return out;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream f = open_in(path);
  ConfigFile cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ParseError(path, lineno, "unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path, lineno, "expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(path, lineno, "empty key");
    cfg.values_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

std::string ConfigFile::get_string(const std::string& key,
                                   const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return std::stod(it->second);
}

int ConfigFile::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return std::stoi(it->second);
}

}  // namespace gtforge
