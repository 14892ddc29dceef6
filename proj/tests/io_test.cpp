#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "gtforge/io.h"
#include "test_util.h"

using namespace gtforge;
using testutil::pose_distance;
using testutil::random_quat;
using testutil::random_vec;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("gtforge_io_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("imu csv round trip") {
  TempDir dir;
  const std::string path = dir.file("imu.csv");
  std::vector<ImuSample> samples;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    samples.push_back({0.002 * i, random_vec(rng, 3.0), random_vec(rng, 1.0)});
  }
  write_imu_csv(path, samples);
  const auto back = read_imu_csv(path);
  REQUIRE(back.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(std::abs(back[i].t - samples[i].t) < 1e-9);
    CHECK((back[i].accel - samples[i].accel).norm() < 1e-7);
    CHECK((back[i].gyro - samples[i].gyro).norm() < 1e-7);
  }
}

TEST_CASE("imu csv three explicit rows") {
  TempDir dir;
  const std::string path = dir.file("imu.csv");
  write_text(path,
             "t,ax,ay,az,wx,wy,wz\n"
             "0.0,0.0,0.0,9.81,0.0,0.0,0.0\n"
             "0.002,0.1,0.0,9.81,0.0,0.0,0.01\n"
             "0.004,0.2,0.0,9.80,0.0,0.0,0.02\n");
  const auto samples = read_imu_csv(path);
  REQUIRE(samples.size() == 3);
  CHECK(samples[0].t == 0.0);
  CHECK(samples[0].accel == Vec3(0, 0, 9.81));
  CHECK(samples[2].gyro == Vec3(0, 0, 0.02));
}

TEST_CASE("mocap csv quaternion norm handling") {
  TempDir dir;
  const std::string path = dir.file("mocap.csv");
  write_text(path,
             "t,px,py,pz,qx,qy,qz,qw\n"
             "0.00,1.0,2.0,3.0,0.0,0.0,0.0,1.0\n"
             // Slightly off unit norm: renormalized, kept.
             "0.01,1.0,2.0,3.0,0.0,0.0,0.0,1.0005\n"
             // Norm 0.9: rejected and counted.
             "0.02,1.0,2.0,3.0,0.0,0.0,0.0,0.9\n"
             "0.03,1.1,2.0,3.0,0.0,0.0,0.1,0.994987437\n");
  CsvReadStats stats;
  const auto samples = read_mocap_csv(path, &stats);
  CHECK(samples.size() == 3);
  CHECK(stats.rows_rejected == 1);
  for (const auto& s : samples) {
    CHECK(std::abs(s.pose.rotation.norm() - 1.0) < 1e-12);
  }
  CHECK(samples[2].tau == 0.03);
}

TEST_CASE("duplicate timestamp rejected") {
  TempDir dir;
  const std::string path = dir.file("mocap.csv");
  write_text(path,
             "t,px,py,pz,qx,qy,qz,qw\n"
             "0.00,0,0,0,0,0,0,1\n"
             "0.01,0,0,0,0,0,0,1\n"
             "0.01,0,0,0,0,0,0,1\n");
  CHECK_THROWS_AS(read_mocap_csv(path), NonMonotoneTimeError);

  const std::string imu_path = dir.file("imu.csv");
  write_text(imu_path,
             "t,ax,ay,az,wx,wy,wz\n"
             "0.002,0,0,9.81,0,0,0\n"
             "0.001,0,0,9.81,0,0,0\n");
  CHECK_THROWS_AS(read_imu_csv(imu_path), NonMonotoneTimeError);
}

TEST_CASE("error messages carry path, line, and a remedy hint") {
  TempDir dir;
  const std::string path = dir.file("bad.csv");
  write_text(path,
             "t,px,py,pz,qx,qy,qz,qw\n"
             "0.00,0,0,0,0,0,0,1\n"
             "nonsense\n");
  try {
    read_mocap_csv(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line_number == 3);
    CHECK(std::string(e.what()).find(path) != std::string::npos);
  }
}

TEST_CASE("mocap csv round trip") {
  TempDir dir;
  const std::string path = dir.file("mocap.csv");
  std::vector<MoCapSample> samples;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 40; ++i) {
    samples.push_back({0.01 * i, Pose(random_quat(rng), random_vec(rng))});
  }
  write_mocap_csv(path, samples);
  const auto back = read_mocap_csv(path);
  REQUIRE(back.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(std::abs(back[i].tau - samples[i].tau) < 1e-9);
    CHECK(pose_distance(back[i].pose, samples[i].pose) < 1e-7);
  }
}

TEST_CASE("tum round trip and comments") {
  TempDir dir;
  const std::string path = dir.file("traj.tum");
  Trajectory traj;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 30; ++i) {
    traj.push_back({0.05 * i, Pose(random_quat(rng), random_vec(rng, 2.0))});
  }
  write_tum(path, traj);
  const Trajectory back = read_tum(path);
  REQUIRE(back.size() == traj.size());
  for (size_t i = 0; i < traj.size(); ++i) {
    CHECK(std::abs(back[i].t - traj[i].t) < 1e-9);
    CHECK(pose_distance(back[i].pose, traj[i].pose) < 1e-7);
  }

  const std::string commented = dir.file("commented.tum");
  write_text(commented,
             "# a comment line\n"
             "0.0 1 2 3 0 0 0 1\n"
             "# another\n"
             "0.1 1 2 3.5 0 0 0 1\n");
  const Trajectory c = read_tum(commented);
  REQUIRE(c.size() == 2);
  CHECK(c[1].pose.translation.z() == 3.5);
}

TEST_CASE("empty file") {
  TempDir dir;
  const std::string path = dir.file("empty.csv");
  write_text(path, "");
  CHECK(read_tum(path).empty());
  write_text(path, "t,ax,ay,az,wx,wy,wz\n");
  CHECK(read_imu_csv(path).empty());
  write_text(path, "t,px,py,pz,qx,qy,qz,qw\n");
  CHECK(read_mocap_csv(path).empty());
}

TEST_CASE("config file") {
  TempDir dir;
  const std::string path = dir.file("config.cfg");
  write_text(path,
             "# top comment\n"
             "[simulate]\n"
             "duration = 60\n"
             "imu-rate = 500.0\n"
             "label = run_a  # trailing comment\n"
             "\n"
             "[estimate]\n"
             "huber-delta = 3.0\n");
  const ConfigFile cfg = ConfigFile::load(path);
  CHECK(cfg.has("simulate.duration"));
  CHECK(cfg.get_int("simulate.duration", -1) == 60);
  CHECK(cfg.get_double("simulate.imu-rate", 0.0) == 500.0);
  CHECK(cfg.get_string("simulate.label", "") == "run_a");
  CHECK(cfg.get_double("estimate.huber-delta", 0.0) == 3.0);
  CHECK(!cfg.has("estimate.duration"));
  CHECK(cfg.get_int("missing.key", 7) == 7);
}
