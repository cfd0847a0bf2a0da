#include "rangeslam/sensor_pipeline.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "rangeslam/error.hpp"

namespace rangeslam {

ChannelStats::ChannelStats(const Channels& mu, const Channels& sigma) : mu_(mu), sigma_(sigma) {
  static constexpr std::array<const char*, 3> kNames{"d", "rx", "fp"};
  for (int c = 0; c < 3; ++c) {
    if (!std::isfinite(mu_[c]) || !std::isfinite(sigma_[c]) || !(sigma_[c] > 0.0)) {
      throw Error(ErrorKind::DegenerateChannel,
                  std::string("channel '") + kNames[c] + "' has non-positive spread");
    }
  }
}

ChannelStats compute_stats(std::span<const UwbFrame> frames) {
  if (frames.size() < 2) {
    throw Error(ErrorKind::EmptyDataset, "need at least two frames, got " + std::to_string(frames.size()));
  }
  Channels mean = Channels::Zero();
  for (const auto& f : frames) mean += f.channels();
  mean /= static_cast<double>(frames.size());

  Channels ss = Channels::Zero();
  for (const auto& f : frames) ss += (f.channels() - mean).cwiseAbs2();
  const Channels sigma = (ss / static_cast<double>(frames.size() - 1)).cwiseSqrt();
  return ChannelStats(mean, sigma);
}

Channels normalize(const Channels& raw, const ChannelStats& stats) {
  return (raw - stats.mu()).cwiseQuotient(stats.sigma());
}

Channels normalize(const UwbFrame& frame, const ChannelStats& stats) {
  return normalize(frame.channels(), stats);
}

Channels denormalize(const Channels& normalized, const ChannelStats& stats) {
  return normalized.cwiseProduct(stats.sigma()) + stats.mu();
}

void save_stats(const ChannelStats& stats, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["format"] = "rangeslam-channel-stats";
  doc["channels"] = {"d", "rx", "fp"};
  doc["mu"] = {stats.mu()[0], stats.mu()[1], stats.mu()[2]};
  doc["sigma"] = {stats.sigma()[0], stats.sigma()[1], stats.sigma()[2]};
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InputError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

ChannelStats load_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InputError, "cannot open " + path.string());
  try {
    const auto doc = nlohmann::json::parse(in);
    const auto mu = doc.at("mu").get<std::vector<double>>();
    const auto sigma = doc.at("sigma").get<std::vector<double>>();
    if (mu.size() != 3 || sigma.size() != 3) {
      throw Error(ErrorKind::SchemaError, path.string() + ": expected three channels");
    }
    return ChannelStats({mu[0], mu[1], mu[2]}, {sigma[0], sigma[1], sigma[2]});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

SmoothingWeights::SmoothingWeights(std::vector<double> k) : k_(std::move(k)) {
  if (k_.empty()) throw Error(ErrorKind::InvalidArgument, "smoothing weights are empty");
  double sum = 0.0;
  for (std::size_t n = 0; n < k_.size(); ++n) {
    if (!(k_[n] > 0.0)) throw Error(ErrorKind::InvalidArgument, "smoothing weights must be positive");
    if (n > 0 && !(k_[n - 1] > k_[n])) {
      throw Error(ErrorKind::InvalidArgument, "smoothing weights must be strictly decreasing");
    }
    sum += k_[n];
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidArgument, "smoothing weights must sum to one");
  }
}

SmoothingWeights SmoothingWeights::geometric(std::size_t count, double ratio) {
  if (count == 0) throw Error(ErrorKind::InvalidArgument, "smoothing count must be positive");
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "geometric ratio must lie in (0, 1)");
  }
  std::vector<double> k(count);
  double term = 1.0;
  double sum = 0.0;
  for (auto& w : k) {
    w = term;
    sum += term;
    term *= ratio;
  }
  for (auto& w : k) w /= sum;
  return SmoothingWeights(std::move(k));
}

// ---------------------------------------------------------------------------

SlidingWindow::SlidingWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error(ErrorKind::InvalidArgument, "window capacity must be positive");
}

void SlidingWindow::push(const Channels& value) {
  entries_.push_back(value);
  if (entries_.size() > capacity_) entries_.pop_front();
  refresh();
}

void SlidingWindow::clear() {
  entries_.clear();
  refresh();
}

const Channels& SlidingWindow::newest(std::size_t n) const {
  if (n >= entries_.size()) throw Error(ErrorKind::InsufficientHistory, "window lag out of range");
  return entries_[entries_.size() - 1 - n];
}

void SlidingWindow::refresh() {
  mean_.setZero();
  stddev_.setZero();
  if (entries_.empty()) return;
  for (const auto& e : entries_) mean_ += e;
  mean_ /= static_cast<double>(entries_.size());
  if (entries_.size() < 2) return;
  Channels ss = Channels::Zero();
  for (const auto& e : entries_) ss += (e - mean_).cwiseAbs2();
  stddev_ = (ss / static_cast<double>(entries_.size() - 1)).cwiseSqrt();
}

bool exception_filter(const SlidingWindow& window, const Channels& value) {
  if (window.size() < 2) return true;
  const Channels deviation = (value - window.mean()).cwiseAbs();
  return (deviation.array() <= 3.0 * window.stddev().array()).all();
}

Channels smooth(const SlidingWindow& window, const SmoothingWeights& weights) {
  if (window.size() < weights.size()) {
    throw Error(ErrorKind::InsufficientHistory, "window holds " + std::to_string(window.size()) +
                                                    " entries, smoothing needs " +
                                                    std::to_string(weights.size()));
  }
  Channels out = Channels::Zero();
  for (std::size_t n = 0; n < weights.size(); ++n) out += weights[n] * window.newest(n);
  return out;
}

// ---------------------------------------------------------------------------

SensorPipeline::SensorPipeline(ChannelStats stats, PipelineParams params)
    : stats_(std::move(stats)),
      params_(params),
      weights_(SmoothingWeights::geometric(params.smoothing_count, params.smoothing_ratio)) {
  if (params_.smoothing_count > params_.window_size) {
    throw Error(ErrorKind::InvalidArgument, "smoothing count exceeds window size");
  }
}

ProcessedFrame SensorPipeline::process(const UwbFrame& frame) {
  if (!(frame.d >= 0.0)) throw Error(ErrorKind::InvalidArgument, "negative range in frame");

  ProcessedFrame out;
  out.anchor_id = frame.anchor_id;
  out.timestamp = frame.timestamp;

  auto it = anchors_.find(frame.anchor_id);
  if (it == anchors_.end()) {
    it = anchors_.emplace(frame.anchor_id, AnchorState{SlidingWindow(params_.window_size), 0}).first;
  }
  AnchorState& state = it->second;

  const Channels value = normalize(frame, stats_);
  if (!exception_filter(state.window, value)) {
    ++state.consecutive_rejections;
    if (params_.reset_after_rejections == 0 ||
        state.consecutive_rejections < params_.reset_after_rejections) {
      out.status = FrameStatus::Rejected;
      return out;
    }
    // The signal moved to a new regime (e.g. LOS -> NLOS); restart the window.
    state.window.clear();
  }
  state.consecutive_rejections = 0;
  state.window.push(value);

  if (state.window.size() < weights_.size()) {
    out.status = FrameStatus::Warmup;
    return out;
  }
  out.status = FrameStatus::Ready;
  out.smoothed = smooth(state.window, weights_);
  out.distance = denormalize(out.smoothed, stats_)[0];
  return out;
}

void SensorPipeline::reset() { anchors_.clear(); }

// ---------------------------------------------------------------------------

std::string format_double(double value) { return csv::format_double(value); }

std::vector<FrameRecord> read_frame_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InputError, "cannot open " + path.string());

  static const std::vector<std::string> kBase{"timestamp", "anchor_id", "d", "rx", "fp", "label"};
  static const std::vector<std::string> kExtra{"agent", "true_x", "true_y", "presented"};

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::SchemaError, path.string() + ":1: missing header");
  const auto header = csv::split(csv::trim(line));
  const bool base_only = header == kBase;
  auto full = kBase;
  full.insert(full.end(), kExtra.begin(), kExtra.end());
  if (!base_only && header != full) {
    throw Error(ErrorKind::SchemaError, path.string() + ":1: unexpected header '" + line + "'");
  }

  std::vector<FrameRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = csv::trim(line);
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    const auto cells = csv::split(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::SchemaError, where + ": expected " + std::to_string(header.size()) +
                                              " fields, found " + std::to_string(cells.size()));
    }
    FrameRecord r;
    try {
      r.frame.timestamp = csv::parse_double(cells[0]);
      r.frame.anchor_id = csv::parse_int(cells[1]);
      r.frame.d = csv::parse_double(cells[2]);
      r.frame.rx = csv::parse_double(cells[3]);
      r.frame.fp = csv::parse_double(cells[4]);
      r.label = csv::parse_int(cells[5]);
      r.presented = r.label;
      if (!base_only) {
        r.agent = csv::parse_int(cells[6]);
        r.true_x = csv::parse_double(cells[7]);
        r.true_y = csv::parse_double(cells[8]);
        r.presented = csv::parse_int(cells[9]);
        r.has_truth = true;
      }
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorKind::SchemaError, where + ": " + e.what());
    }
    if ((r.label != 1 && r.label != -1) || (r.presented != 1 && r.presented != -1)) {
      throw Error(ErrorKind::SchemaError, where + ": labels must be 1 or -1");
    }
    if (!(r.frame.d >= 0.0)) throw Error(ErrorKind::SchemaError, where + ": negative range");
    records.push_back(r);
  }
  return records;
}

void write_frame_csv(std::span<const FrameRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InputError, "cannot write " + path.string());
  out << "timestamp,anchor_id,d,rx,fp,label,agent,true_x,true_y,presented\n";
  for (const auto& r : records) {
    out << csv::format_double(r.frame.timestamp) << ',' << r.frame.anchor_id << ','
        << csv::format_double(r.frame.d) << ',' << csv::format_double(r.frame.rx) << ','
        << csv::format_double(r.frame.fp) << ',' << r.label << ',' << r.agent << ','
        << csv::format_double(r.true_x) << ',' << csv::format_double(r.true_y) << ','
        << r.presented << '\n';
  }
}

}  // namespace rangeslam
