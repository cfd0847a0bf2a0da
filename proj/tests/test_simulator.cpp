#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rangeslam/error.hpp"
#include "rangeslam/simulator.hpp"
#include "test_util.hpp"

using namespace rangeslam;

namespace {

NoiseParams silent() {
  NoiseParams n;
  n.sigma_los = 0.0;
  n.sigma_nlos = 0.0;
  n.sigma_rssi = 0.0;
  return n;
}

double stddev(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

bool same_stream(const std::vector<SyntheticFrame>& a, const std::vector<SyntheticFrame>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].agent != b[i].agent || a[i].timestamp != b[i].timestamp || a[i].true_pose != b[i].true_pose) return false;
    if (a[i].measurements.size() != b[i].measurements.size()) return false;
    for (std::size_t k = 0; k < a[i].measurements.size(); ++k) {
      const auto& x = a[i].measurements[k];
      const auto& y = b[i].measurements[k];
      if (x.frame.anchor_id != y.frame.anchor_id || x.frame.timestamp != y.frame.timestamp || x.frame.d != y.frame.d ||
          x.frame.rx != y.frame.rx || x.frame.fp != y.frame.fp || x.true_los != y.true_los ||
          x.presented_los != y.presented_los) {
        return false;
      }
    }
  }
  return true;
}

Scenario stationary() {
  Scenario s;
  s.anchors = AnchorConfig({{0, {0, 0}}, {1, {20, 0}}, {2, {20, 20}}});
  AgentPath p;
  p.waypoints = {Point2(4, 7)};
  s.agents = {p};
  s.rate = 1.0;
  s.duration = 3.0;
  return s;
}

}  // namespace

TEST_CASE("LOS ground truth examples") {
  const std::vector<Rect> box{{Point2(4, 4), Point2(6, 6)}};
  CHECK(los_ground_truth(Point2(0, 0), Point2(10, 10), {}));
  CHECK_FALSE(los_ground_truth(Point2(0, 0), Point2(10, 10), box));
  CHECK(los_ground_truth(Point2(0, 4), Point2(10, 4), box));      // grazing the bottom edge
  CHECK(los_ground_truth(Point2(0, 8), Point2(8, 0), box));       // touching the corner (4, 4)
  CHECK(los_ground_truth(Point2(0, 0), Point2(3.9, 10), box));
  CHECK_FALSE(los_ground_truth(Point2(5, 0), Point2(5, 10), box));
  CHECK(los_ground_truth(Point2(0, 0), Point2(3, 3), box));       // stops short of the box
}

TEST_CASE("LOS test agrees with dense sampling of the segment") {
  const std::vector<Rect> boxes{{Point2(5, 5), Point2(15, 15)}, {Point2(2, 12), Point2(4, 18)}};
  Rng rng(11);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  int disagreements = 0;
  for (int i = 0; i < 3000; ++i) {
    const Point2 a(u(rng), u(rng));
    const Point2 b(u(rng), u(rng));
    bool blocked = false;
    for (int k = 1; k < 4000 && !blocked; ++k) {
      const Point2 q = a + (b - a) * (k / 4000.0);
      for (const auto& r : boxes) blocked = blocked || r.interior_contains(q);
    }
    // Sampling can only miss tiny clips, never invent a hit.
    if (blocked) CHECK_FALSE(los_ground_truth(a, b, boxes));
    if (!blocked && !los_ground_truth(a, b, boxes)) ++disagreements;
  }
  CHECK(disagreements <= 3);
}

TEST_CASE("range synthesis") {
  Rng rng(0);
  const NoiseParams quiet = silent();
  CHECK(synthesize_range(7.25, true, quiet, rng) == 7.25);
  for (int i = 0; i < 1000; ++i) CHECK(synthesize_range(3.0, false, quiet, rng) >= 3.0);

  Rng seeded(0);
  const NoiseParams noise;
  std::vector<double> draws;
  for (int i = 0; i < 10000; ++i) draws.push_back(synthesize_range(10.0, true, noise, seeded));
  const double sd = stddev(draws);
  CHECK(sd >= 0.045);
  CHECK(sd <= 0.055);

  // NLOS dominates LOS quantile by quantile.
  std::vector<double> los;
  std::vector<double> nlos;
  Rng a(1);
  for (int i = 0; i < 5000; ++i) {
    los.push_back(synthesize_range(10.0, true, noise, a));
    nlos.push_back(synthesize_range(10.0, false, noise, a));
  }
  std::sort(los.begin(), los.end());
  std::sort(nlos.begin(), nlos.end());
  for (std::size_t q = 500; q < 5000; q += 500) CHECK(nlos[q] >= los[q]);

  Rng c(2);
  CHECK(synthesize_range(0.0, true, noise, c) >= 0.0);
}

TEST_CASE("RSSI synthesis") {
  Rng rng(0);
  NoiseParams n = silent();
  const auto one = synthesize_rssi(1.0, true, n, rng);
  CHECK(one.rx == n.p0);
  CHECK(one.fp == n.p0);
  const auto ten = synthesize_rssi(10.0, true, n, rng);
  CHECK(ten.rx == doctest::Approx(-60.0));
  const auto blocked = synthesize_rssi(10.0, false, n, rng);
  CHECK(blocked.fp - blocked.rx == doctest::Approx(-10.0));
  try {
    synthesize_rssi(0.0, true, n, rng);
    FAIL("expected NonPositiveDistance");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonPositiveDistance);
  }
}

TEST_CASE("label degradation") {
  std::vector<bool> labels(10000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 3 != 0;
  Rng rng(0);
  CHECK(degrade_labels(labels, 1.0, rng) == labels);
  const auto flipped = degrade_labels(labels, 0.0, rng);
  for (std::size_t i = 0; i < labels.size(); ++i) CHECK(flipped[i] != labels[i]);

  Rng seeded(0);
  const auto out = degrade_labels(labels, 0.8, seeded);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) flips += out[i] != labels[i] ? 1 : 0;
  CHECK(flips >= 1850);
  CHECK(flips <= 2150);

  Rng again(0);
  CHECK(degrade_labels(labels, 0.8, again) == out);
  CHECK_THROWS_AS(degrade_labels(labels, 1.2, rng), Error);
}

TEST_CASE("run examples") {
  const auto still = run(stationary());
  REQUIRE(still.size() == 3);
  for (const auto& f : still) {
    CHECK(f.true_pose == Point2(4, 7));
    CHECK(f.measurements.size() == 3);
  }
  CHECK(still[1].timestamp == 1.0);

  const Scenario one_lap = benchmark_scenario(1.0, 0, 1);
  CHECK(one_lap.agents[0].loop_length() == doctest::Approx(60.0));
  const auto frames = run(one_lap);
  CHECK(frames.size() == 1200);
  CHECK(run(benchmark_scenario(1.0, 0, 2)).size() == 2400);
  CHECK((frames.front().true_pose - Point2(2.5, 2.5)).norm() < 1e-12);
  // 2.5 m/s at 50 Hz is 5 cm per frame.
  for (std::size_t i = 1; i < frames.size(); ++i) {
    CHECK((frames[i].true_pose - frames[i - 1].true_pose).norm() == doctest::Approx(0.05).epsilon(1e-6));
  }
}

TEST_CASE("benchmark geometry: the obstacle hides the far anchors") {
  const auto frames = run(benchmark_scenario(1.0, 0, 1));
  int checked = 0;
  for (const auto& f : frames) {
    const Point2& p = f.true_pose;
    // Middle of the top side: anchors 1 (0.5, 0.5) and 2 (19.5, 0.5) lie across the obstacle.
    if (std::abs(p.y() - 17.5) < 1e-9 && p.x() > 7.0 && p.x() < 13.0) {
      for (const auto& m : f.measurements) {
        CHECK(m.true_los == (m.frame.anchor_id == 3 || m.frame.anchor_id == 4));
      }
      ++checked;
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("LOS truth depends on geometry only") {
  Scenario a = benchmark_scenario(0.7, 1, 1);
  Scenario b = benchmark_scenario(0.7, 99, 1);
  b.noise.sigma_los = 0.5;
  b.noise.nlos_bias_mean = 2.0;
  const auto fa = run(a);
  const auto fb = run(b);
  REQUIRE(fa.size() == fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) {
    for (std::size_t k = 0; k < fa[i].measurements.size(); ++k) {
      CHECK(fa[i].measurements[k].true_los == fb[i].measurements[k].true_los);
    }
  }
}

TEST_CASE("presented labels keep the identification rate") {
  for (double rate : {0.99, 0.8, 0.6}) {
    const auto frames = run(benchmark_scenario(rate, 3, 2));
    std::size_t kept = 0;
    std::size_t total = 0;
    for (const auto& f : frames) {
      for (const auto& m : f.measurements) {
        kept += m.presented_los == m.true_los ? 1 : 0;
        ++total;
      }
    }
    const double n = static_cast<double>(total);
    const double sd = std::sqrt(rate * (1 - rate) / n);
    CHECK(std::abs(static_cast<double>(kept) / n - rate) <= 3 * sd);
  }
}

TEST_CASE("streams are reproducible from the seed") {
  const auto a = run(benchmark_scenario(0.8, 5, 1));
  const auto b = run(benchmark_scenario(0.8, 5, 1));
  CHECK(same_stream(a, b));
  CHECK_FALSE(same_stream(a, run(benchmark_scenario(0.8, 6, 1))));
}

TEST_CASE("two agents get independent streams in tick order") {
  Scenario s = benchmark_scenario(0.9, 2, 1);
  AgentPath second;
  second.waypoints = {Point2(1.5, 10.0), Point2(1.5, 12.0)};
  second.speed = 1.0;
  s.agents.push_back(second);
  const auto frames = run(s);
  CHECK(frames.size() == 2 * s.tick_count());
  for (std::size_t i = 0; i < frames.size(); ++i) CHECK(frames[i].agent == static_cast<int>(i % 2));
  CHECK(frames[0].measurements[0].frame.d != frames[1].measurements[0].frame.d);
}

TEST_CASE("frame records round trip through CSV") {
  TempDir dir("sim");
  const auto frames = run(benchmark_scenario(0.7, 4, 1));
  const auto records = to_records(frames);
  CHECK(records.size() == frames.size() * 4);
  write_frame_csv(records, dir / "frames.csv");
  const auto back = from_records(read_frame_csv(dir / "frames.csv"));
  CHECK(same_stream(frames, back));
}

TEST_CASE("scenario files") {
  TempDir dir("scenario");
  Scenario s = benchmark_scenario(0.8, 12, 2);
  s.noise.sigma_los = 0.07;
  save_scenario(s, dir / "s.json");
  const Scenario back = load_scenario(dir / "s.json");
  CHECK(back.seed == 12);
  CHECK(back.ident_rate == 0.8);
  CHECK(back.noise.sigma_los == 0.07);
  CHECK(back.anchors.size() == 4);
  CHECK(back.obstacles.size() == 1);
  CHECK(same_stream(run(s), run(back)));

  spit(dir / "unknown.json", R"({"bounds": {"min": [0, 0], "max": [1, 1]}, "colour": 3})");
  try {
    load_scenario(dir / "unknown.json");
    FAIL("expected InvalidScenario");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidScenario);
  }
  spit(dir / "broken.json", "{");
  CHECK_THROWS_AS(load_scenario(dir / "broken.json"), Error);
}

TEST_CASE("invalid scenarios are rejected with a diagnostic") {
  auto expect_invalid = [](const Scenario& s, const std::string& fragment) {
    try {
      s.validate();
      FAIL("expected InvalidScenario");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidScenario);
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  Scenario s = benchmark_scenario(0.9, 0);
  s.agents[0].waypoints.push_back(Point2(25, 5));
  expect_invalid(s, "outside");

  s = benchmark_scenario(0.9, 0);
  s.agents[0].speed = 0.0;
  expect_invalid(s, "speed");

  s = benchmark_scenario(0.9, 0);
  s.rate = 0.0;
  expect_invalid(s, "rate");

  s = benchmark_scenario(0.9, 0);
  s.ident_rate = 1.5;
  expect_invalid(s, "ident_rate");

  s = stationary();
  s.duration = 0.0;
  expect_invalid(s, "duration");
  CHECK_THROWS_AS(run(s), Error);
}
