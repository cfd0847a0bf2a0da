#pragma once

// Per-anchor UWB preprocessing: normalization against training statistics,
// 3-sigma outlier rejection over a sliding window, and weighted moving-average
// smoothing.

#include <cstddef>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rangeslam {

/// Channel order used everywhere a frame is viewed as a vector: (d, rx, fp).
using Channels = Eigen::Vector3d;

struct UwbFrame {
  int anchor_id = 0;
  double timestamp = 0.0;
  double d = 0.0;   // m
  double rx = 0.0;  // dBm, total received power
  double fp = 0.0;  // dBm, first-path power

  Channels channels() const { return {d, rx, fp}; }
};

class ChannelStats {
 public:
  /// Throws DegenerateChannel unless every sigma is strictly positive.
  ChannelStats(const Channels& mu, const Channels& sigma);

  const Channels& mu() const { return mu_; }
  const Channels& sigma() const { return sigma_; }

  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;

 private:
  Channels mu_;
  Channels sigma_;
};

/// Sample mean and (n-1) standard deviation per channel.
ChannelStats compute_stats(std::span<const UwbFrame> frames);

Channels normalize(const UwbFrame& frame, const ChannelStats& stats);
Channels normalize(const Channels& raw, const ChannelStats& stats);
Channels denormalize(const Channels& normalized, const ChannelStats& stats);

void save_stats(const ChannelStats& stats, const std::filesystem::path& path);
ChannelStats load_stats(const std::filesystem::path& path);

/// Positive weights, newest first, summing to one and strictly decreasing.
class SmoothingWeights {
 public:
  explicit SmoothingWeights(std::vector<double> k);

  /// k_n proportional to ratio^(n-1), renormalized. Requires 0 < ratio < 1.
  static SmoothingWeights geometric(std::size_t count, double ratio);

  std::size_t size() const { return k_.size(); }
  double operator[](std::size_t n) const { return k_[n]; }
  std::span<const double> values() const { return k_; }

 private:
  std::vector<double> k_;
};

/// Bounded history of normalized frames, oldest first. Mean and sample std are
/// recomputed from the entries on every mutation.
class SlidingWindow {
 public:
  explicit SlidingWindow(std::size_t capacity);

  void push(const Channels& value);
  void clear();

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// n = 0 is the newest entry.
  const Channels& newest(std::size_t n = 0) const;
  const std::deque<Channels>& entries() const { return entries_; }

  const Channels& mean() const { return mean_; }
  const Channels& stddev() const { return stddev_; }

 private:
  void refresh();

  std::size_t capacity_;
  std::deque<Channels> entries_;
  Channels mean_ = Channels::Zero();
  Channels stddev_ = Channels::Zero();
};

/// Closed 3-sigma test against the window statistics. Windows holding fewer
/// than two entries accept everything.
bool exception_filter(const SlidingWindow& window, const Channels& value);

/// Weighted moving average over the newest weights.size() entries.
Channels smooth(const SlidingWindow& window, const SmoothingWeights& weights);

struct PipelineParams {
  std::size_t window_size = 20;
  std::size_t smoothing_count = 5;
  double smoothing_ratio = 0.7;
  /// After this many consecutive rejections on one anchor the window is
  /// flushed and reseeded with the incoming frame. Zero disables the reset.
  std::size_t reset_after_rejections = 10;
};

enum class FrameStatus { Ready, Warmup, Rejected };

struct ProcessedFrame {
  FrameStatus status = FrameStatus::Warmup;
  int anchor_id = 0;
  double timestamp = 0.0;
  Channels smoothed = Channels::Zero();  // normalized units
  double distance = 0.0;                 // smoothed range, back in meters
};

/// Independent windows per anchor. Single writer; movable between threads.
class SensorPipeline {
 public:
  SensorPipeline(ChannelStats stats, PipelineParams params = {});

  ProcessedFrame process(const UwbFrame& frame);
  void reset();

  const ChannelStats& stats() const { return stats_; }
  const PipelineParams& params() const { return params_; }
  const SmoothingWeights& weights() const { return weights_; }

 private:
  struct AnchorState {
    SlidingWindow window;
    std::size_t consecutive_rejections = 0;
  };

  ChannelStats stats_;
  PipelineParams params_;
  SmoothingWeights weights_;
  std::map<int, AnchorState> anchors_;
};

// ---------------------------------------------------------------------------
// Frame CSV: `timestamp,anchor_id,d,rx,fp,label` with optional trailing
// columns `agent,true_x,true_y,presented` written by the simulator.

struct FrameRecord {
  UwbFrame frame;
  int label = 1;  // +1 LOS, -1 NLOS (ground truth annotation)
  int agent = 0;
  bool has_truth = false;
  double true_x = 0.0;
  double true_y = 0.0;
  int presented = 1;  // label shown downstream in oracle-degraded mode
};

std::vector<FrameRecord> read_frame_csv(const std::filesystem::path& path);
void write_frame_csv(std::span<const FrameRecord> records, const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace rangeslam
