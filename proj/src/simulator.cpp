#include "rangeslam/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rangeslam/error.hpp"

namespace rangeslam {

double AgentPath::loop_length() const {
  if (waypoints.size() < 2) return 0.0;
  double length = 0.0;
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    length += (waypoints[(i + 1) % waypoints.size()] - waypoints[i]).norm();
  }
  return length;
}

Point2 AgentPath::position_at(double t) const {
  if (waypoints.empty()) return Point2::Zero();
  const double length = loop_length();
  if (length == 0.0) return waypoints.front();
  double s = std::fmod(speed * t, length);
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    const Point2& a = waypoints[i];
    const Point2& b = waypoints[(i + 1) % waypoints.size()];
    const double seg = (b - a).norm();
    if (s <= seg && seg > 0.0) return a + (b - a) * (s / seg);
    s -= seg;
  }
  return waypoints.front();
}

int AgentPath::lap_at(double t) const {
  const double length = loop_length();
  if (length == 0.0) return 0;
  return static_cast<int>(std::floor(speed * t / length));
}

void Scenario::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidScenario, msg); };
  if (!(bounds.max.x() > bounds.min.x() && bounds.max.y() > bounds.min.y())) fail("bounds are empty");
  if (anchors.size() < 2) fail("at least two anchors are required");
  for (const auto& a : anchors.anchors()) {
    if (!bounds.contains(a.position)) fail("anchor " + std::to_string(a.id) + " lies outside the bounds");
  }
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    const auto& o = obstacles[i];
    if (!(o.max.x() > o.min.x() && o.max.y() > o.min.y())) fail("obstacle " + std::to_string(i) + " is empty");
    if (!bounds.contains(o.min) || !bounds.contains(o.max)) {
      fail("obstacle " + std::to_string(i) + " extends outside the bounds");
    }
  }
  if (agents.empty()) fail("no agents");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto& ag = agents[i];
    if (ag.waypoints.empty()) fail("agent " + std::to_string(i) + " has no waypoints");
    if (!(ag.speed > 0.0)) fail("agent " + std::to_string(i) + " speed must be positive");
    if (ag.laps < 1) fail("agent " + std::to_string(i) + " needs at least one lap");
    for (const auto& w : ag.waypoints) {
      if (!bounds.contains(w)) fail("agent " + std::to_string(i) + " has a waypoint outside the bounds");
    }
  }
  if (!(rate > 0.0)) fail("rate must be positive");
  if (!(duration >= 0.0)) fail("duration must be non-negative");
  if (!(ident_rate >= 0.0 && ident_rate <= 1.0)) fail("ident_rate must lie in [0, 1]");
  if (!(noise.sigma_los >= 0.0 && noise.sigma_nlos >= 0.0 && noise.sigma_rssi >= 0.0)) {
    fail("noise standard deviations must be non-negative");
  }
  if (!(noise.nlos_bias_mean >= 0.0)) fail("nlos_bias_mean must be non-negative");
  if (effective_duration() <= 0.0) fail("duration is zero; set it explicitly for stationary agents");
}

double Scenario::effective_duration() const {
  if (duration > 0.0) return duration;
  double longest = 0.0;
  for (const auto& ag : agents) longest = std::max(longest, ag.laps * ag.loop_length() / ag.speed);
  return longest;
}

std::size_t Scenario::tick_count() const {
  return static_cast<std::size_t>(std::llround(effective_duration() * rate));
}

Scenario benchmark_scenario(double ident_rate, std::uint64_t seed, int laps) {
  Scenario s;
  s.bounds = {Point2(0.0, 0.0), Point2(20.0, 20.0)};
  s.anchors = AnchorConfig({{1, Point2(0.5, 0.5)},
                            {2, Point2(19.5, 0.5)},
                            {3, Point2(19.5, 19.5)},
                            {4, Point2(0.5, 19.5)}});
  s.obstacles = {{Point2(5.0, 5.0), Point2(15.0, 15.0)}};
  AgentPath path;
  path.waypoints = {Point2(2.5, 2.5), Point2(17.5, 2.5), Point2(17.5, 17.5), Point2(2.5, 17.5)};
  path.speed = 2.5;
  path.laps = laps;
  s.agents = {path};
  s.rate = 50.0;
  s.seed = seed;
  s.ident_rate = ident_rate;
  s.mode = LabelMode::OracleDegraded;
  return s;
}

// ---------------------------------------------------------------------------

bool los_ground_truth(const Point2& p, const Point2& anchor, std::span<const Rect> obstacles) {
  const Point2 dir = anchor - p;
  for (const auto& box : obstacles) {
    // Open-interval slab test: the set of t where p + t dir is strictly inside.
    double t_enter = 0.0;
    double t_exit = 1.0;
    bool hit = true;
    for (int axis = 0; axis < 2 && hit; ++axis) {
      const double o = p[axis];
      const double d = dir[axis];
      if (d == 0.0) {
        if (!(o > box.min[axis] && o < box.max[axis])) hit = false;
        continue;
      }
      double t0 = (box.min[axis] - o) / d;
      double t1 = (box.max[axis] - o) / d;
      if (t0 > t1) std::swap(t0, t1);
      t_enter = std::max(t_enter, t0);
      t_exit = std::min(t_exit, t1);
      if (!(t_enter < t_exit)) hit = false;
    }
    if (hit) return false;
  }
  return true;
}

double synthesize_range(double d_true, bool los, const NoiseParams& noise, Rng& rng) {
  if (!(d_true >= 0.0)) throw Error(ErrorKind::InvalidArgument, "true distance must be non-negative");
  std::normal_distribution<double> gauss(0.0, 1.0);
  double d = d_true;
  if (los) {
    d += noise.sigma_los * gauss(rng);
  } else {
    if (noise.nlos_bias_mean > 0.0) {
      std::exponential_distribution<double> bias(1.0 / noise.nlos_bias_mean);
      d += bias(rng);
    }
    d += noise.sigma_nlos * gauss(rng);
  }
  return std::max(d, 0.0);
}

Rssi synthesize_rssi(double d, bool los, const NoiseParams& noise, Rng& rng) {
  if (!(d > 0.0)) throw Error(ErrorKind::NonPositiveDistance, "RSSI needs a positive distance");
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double base = noise.p0 - 10.0 * noise.pathloss_exponent * std::log10(d);
  Rssi out;
  out.rx = base + noise.sigma_rssi * gauss(rng);
  out.fp = base + noise.sigma_rssi * gauss(rng);
  if (!los) {
    out.rx -= noise.nlos_atten;
    out.fp -= 2.0 * noise.nlos_atten;
  }
  return out;
}

std::vector<bool> degrade_labels(const std::vector<bool>& true_los, double ident_rate, Rng& rng) {
  if (!(ident_rate >= 0.0 && ident_rate <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "ident_rate must lie in [0, 1]");
  }
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<bool> out(true_los.size());
  for (std::size_t i = 0; i < true_los.size(); ++i) {
    out[i] = uniform(rng) < 1.0 - ident_rate ? !true_los[i] : true_los[i];
  }
  return out;
}

std::vector<SyntheticFrame> run(const Scenario& scenario) {
  scenario.validate();
  const std::size_t ticks = scenario.tick_count();

  std::vector<Rng> rngs;
  for (std::size_t a = 0; a < scenario.agents.size(); ++a) {
    std::seed_seq seq{static_cast<std::uint32_t>(scenario.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(scenario.seed >> 32), static_cast<std::uint32_t>(a)};
    rngs.emplace_back(seq);
  }

  std::vector<SyntheticFrame> frames;
  frames.reserve(ticks * scenario.agents.size());
  for (std::size_t k = 0; k < ticks; ++k) {
    const double t = static_cast<double>(k) / scenario.rate;
    for (std::size_t a = 0; a < scenario.agents.size(); ++a) {
      Rng& rng = rngs[a];
      SyntheticFrame f;
      f.agent = static_cast<int>(a);
      f.timestamp = t;
      f.true_pose = scenario.agents[a].position_at(t);
      for (const auto& anchor : scenario.anchors.anchors()) {
        AnchorMeasurement m;
        m.true_los = los_ground_truth(f.true_pose, anchor.position, scenario.obstacles);
        const double d_true = (f.true_pose - anchor.position).norm();
        m.frame.anchor_id = anchor.id;
        m.frame.timestamp = t;
        m.frame.d = synthesize_range(d_true, m.true_los, scenario.noise, rng);
        const Rssi rssi = synthesize_rssi(std::max(d_true, 1e-3), m.true_los, scenario.noise, rng);
        m.frame.rx = rssi.rx;
        m.frame.fp = rssi.fp;
        m.presented_los = degrade_labels({m.true_los}, scenario.ident_rate, rng).front();
        f.measurements.push_back(m);
      }
      frames.push_back(std::move(f));
    }
  }
  return frames;
}

std::vector<FrameRecord> to_records(std::span<const SyntheticFrame> frames) {
  std::vector<FrameRecord> out;
  for (const auto& f : frames) {
    for (const auto& m : f.measurements) {
      FrameRecord r;
      r.frame = m.frame;
      r.label = m.true_los ? 1 : -1;
      r.agent = f.agent;
      r.has_truth = true;
      r.true_x = f.true_pose.x();
      r.true_y = f.true_pose.y();
      r.presented = m.presented_los ? 1 : -1;
      out.push_back(r);
    }
  }
  return out;
}

std::vector<SyntheticFrame> from_records(std::span<const FrameRecord> records) {
  std::vector<SyntheticFrame> out;
  for (const auto& r : records) {
    if (out.empty() || out.back().timestamp != r.frame.timestamp || out.back().agent != r.agent) {
      SyntheticFrame f;
      f.agent = r.agent;
      f.timestamp = r.frame.timestamp;
      f.true_pose = Point2(r.true_x, r.true_y);
      out.push_back(std::move(f));
    }
    AnchorMeasurement m;
    m.frame = r.frame;
    m.true_los = r.label > 0;
    m.presented_los = r.presented > 0;
    out.back().measurements.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

Point2 point_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2) throw Error(ErrorKind::InvalidScenario, "points have two coordinates");
  return {v[0], v[1]};
}

json point_to_json(const Point2& p) { return {p.x(), p.y()}; }

Rect rect_from_json(const json& j) { return {point_from_json(j.at("min")), point_from_json(j.at("max"))}; }

json rect_to_json(const Rect& r) { return {{"min", point_to_json(r.min)}, {"max", point_to_json(r.max)}}; }

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!keys.count(key)) throw Error(ErrorKind::InvalidScenario, "unknown key '" + key + "' in " + where);
  }
}

}  // namespace

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InputError, "cannot open " + path.string());
  Scenario s;
  try {
    const json doc = json::parse(in);
    reject_unknown(doc,
                   {"bounds", "anchors", "obstacles", "agents", "rate", "duration", "seed", "noise", "ident_rate",
                    "mode"},
                   "scenario");
    s.bounds = rect_from_json(doc.at("bounds"));
    std::vector<Anchor> anchors;
    for (const auto& a : doc.at("anchors")) {
      reject_unknown(a, {"id", "x", "y"}, "anchor");
      anchors.push_back({a.at("id").get<int>(), Point2(a.at("x").get<double>(), a.at("y").get<double>())});
    }
    s.anchors = AnchorConfig(std::move(anchors));
    for (const auto& o : doc.value("obstacles", json::array())) s.obstacles.push_back(rect_from_json(o));
    for (const auto& a : doc.at("agents")) {
      reject_unknown(a, {"waypoints", "speed", "laps"}, "agent");
      AgentPath path;
      for (const auto& w : a.at("waypoints")) path.waypoints.push_back(point_from_json(w));
      path.speed = a.at("speed").get<double>();
      path.laps = a.value("laps", 1);
      s.agents.push_back(std::move(path));
    }
    s.rate = doc.value("rate", s.rate);
    s.duration = doc.value("duration", 0.0);
    s.seed = doc.value("seed", std::uint64_t{0});
    s.ident_rate = doc.value("ident_rate", 1.0);
    if (doc.contains("noise")) {
      const auto& n = doc.at("noise");
      reject_unknown(n,
                     {"sigma_los", "nlos_bias_mean", "sigma_nlos", "p0", "pathloss_exponent", "nlos_atten",
                      "sigma_rssi"},
                     "noise");
      s.noise.sigma_los = n.value("sigma_los", s.noise.sigma_los);
      s.noise.nlos_bias_mean = n.value("nlos_bias_mean", s.noise.nlos_bias_mean);
      s.noise.sigma_nlos = n.value("sigma_nlos", s.noise.sigma_nlos);
      s.noise.p0 = n.value("p0", s.noise.p0);
      s.noise.pathloss_exponent = n.value("pathloss_exponent", s.noise.pathloss_exponent);
      s.noise.nlos_atten = n.value("nlos_atten", s.noise.nlos_atten);
      s.noise.sigma_rssi = n.value("sigma_rssi", s.noise.sigma_rssi);
    }
    const auto mode = doc.value("mode", std::string("oracle-degraded"));
    if (mode == "oracle-degraded") s.mode = LabelMode::OracleDegraded;
    else if (mode == "classifier") s.mode = LabelMode::Classifier;
    else throw Error(ErrorKind::InvalidScenario, "unknown mode '" + mode + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidScenario, path.string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidScenario) throw;
    throw Error(ErrorKind::InvalidScenario, path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  json doc;
  doc["bounds"] = rect_to_json(s.bounds);
  doc["anchors"] = json::array();
  for (const auto& a : s.anchors.anchors()) {
    doc["anchors"].push_back({{"id", a.id}, {"x", a.position.x()}, {"y", a.position.y()}});
  }
  doc["obstacles"] = json::array();
  for (const auto& o : s.obstacles) doc["obstacles"].push_back(rect_to_json(o));
  doc["agents"] = json::array();
  for (const auto& ag : s.agents) {
    json w = json::array();
    for (const auto& p : ag.waypoints) w.push_back(point_to_json(p));
    doc["agents"].push_back({{"waypoints", w}, {"speed", ag.speed}, {"laps", ag.laps}});
  }
  doc["rate"] = s.rate;
  if (s.duration > 0.0) doc["duration"] = s.duration;
  doc["seed"] = s.seed;
  doc["noise"] = {{"sigma_los", s.noise.sigma_los},           {"nlos_bias_mean", s.noise.nlos_bias_mean},
                  {"sigma_nlos", s.noise.sigma_nlos},         {"p0", s.noise.p0},
                  {"pathloss_exponent", s.noise.pathloss_exponent}, {"nlos_atten", s.noise.nlos_atten},
                  {"sigma_rssi", s.noise.sigma_rssi}};
  doc["ident_rate"] = s.ident_rate;
  doc["mode"] = s.mode == LabelMode::OracleDegraded ? "oracle-degraded" : "classifier";
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InputError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace rangeslam
