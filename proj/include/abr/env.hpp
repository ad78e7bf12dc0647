#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "abr/common.hpp"
#include "abr/trace.hpp"

namespace abr {

inline constexpr std::size_t kHistoryLen = 8;

// Chunked video description.  Chunk sizes default to bitrate * duration with
// a seeded +-10% per-chunk variation shared across levels, so the ladder
// ordering is preserved chunk by chunk.
struct VideoSpec {
  std::vector<double> bitrate_levels_kbps = {300, 750, 1200, 1850, 2850, 4300};
  double chunk_duration_s = 4.0;
  std::size_t num_chunks = 48;
  double buffer_capacity_s = 60.0;
  // chunk_sizes_mb[level][chunk] in megabits
  std::vector<std::vector<double>> chunk_sizes_mb;

  std::size_t levels() const { return bitrate_levels_kbps.size(); }
  double video_duration() const { return chunk_duration_s * num_chunks; }
  // Size of a chunk at the nominal encoding rate, before variation.
  double nominal_chunk_size_mb(std::size_t level) const {
    return bitrate_levels_kbps[level] * chunk_duration_s / 1000.0;
  }
};

inline void fill_default_chunk_sizes(VideoSpec& video, double variation = 0.1,
                                     std::uint64_t seed = 9001) {
  video.chunk_sizes_mb.assign(video.levels(), {});
  Rng rng(derive_seed(seed, /*tag=*/0x73697a65ULL));
  std::vector<double> factor(video.num_chunks);
  for (std::size_t i = 0; i < video.num_chunks; ++i) {
    factor[i] = 1.0 + variation * uniform_range(rng, -1.0, 1.0);
  }
  for (std::size_t l = 0; l < video.levels(); ++l) {
    video.chunk_sizes_mb[l].resize(video.num_chunks);
    for (std::size_t i = 0; i < video.num_chunks; ++i) {
      video.chunk_sizes_mb[l][i] = video.nominal_chunk_size_mb(l) * factor[i];
    }
  }
}

inline VideoSpec make_default_video() {
  VideoSpec video;
  fill_default_chunk_sizes(video);
  return video;
}

inline void validate_video(const VideoSpec& video) {
  if (video.levels() < 2) {
    throw std::invalid_argument("video needs at least 2 bitrate levels");
  }
  for (std::size_t l = 1; l < video.levels(); ++l) {
    if (!(video.bitrate_levels_kbps[l] > video.bitrate_levels_kbps[l - 1])) {
      throw std::invalid_argument("bitrate levels must be strictly increasing");
    }
  }
  if (!(video.chunk_duration_s > 0.0) || video.num_chunks == 0 ||
      !(video.buffer_capacity_s > 0.0)) {
    throw std::invalid_argument("video spec has non-positive dimensions");
  }
  if (video.chunk_sizes_mb.size() != video.levels()) {
    throw std::invalid_argument("chunk size table missing levels");
  }
  for (const auto& row : video.chunk_sizes_mb) {
    if (row.size() != video.num_chunks) {
      throw std::invalid_argument("chunk size table missing chunks");
    }
    for (double s : row) {
      if (!(s > 0.0) || !std::isfinite(s)) {
        throw std::invalid_argument("chunk sizes must be positive and finite");
      }
    }
  }
}

// Observation handed to policies.  Histories hold the most recent
// measurement at index 0 and are zero-padded until kHistoryLen chunks have
// been downloaded.  buffer_capacity_s rides along so the state can be
// flattened without a VideoSpec at hand.
struct StreamState {
  std::size_t last_level = 0;
  double buffer_s = 0.0;
  std::array<double, kHistoryLen> throughput_mbps{};
  std::array<double, kHistoryLen> download_time_s{};
  std::vector<double> next_chunk_sizes_mb;
  double remaining_fraction = 1.0;

  // bookkeeping, not part of the flattened observation
  std::size_t chunk_index = 0;  // next chunk to download
  double buffer_capacity_s = 60.0;

  std::size_t levels() const { return next_chunk_sizes_mb.size(); }
};

inline constexpr std::size_t state_dim(std::size_t levels) {
  return 2 + 2 * kHistoryLen + levels + 1;
}

// Fixed flattening with unit-scale normalization: level index by ladder
// position, buffer by capacity, rates and times by 10, sizes by 10 Mb.
inline std::vector<double> flatten_state(const StreamState& s) {
  std::vector<double> x;
  x.reserve(state_dim(s.levels()));
  const double denom = s.levels() > 1 ? static_cast<double>(s.levels() - 1) : 1.0;
  x.push_back(static_cast<double>(s.last_level) / denom);
  x.push_back(s.buffer_s / s.buffer_capacity_s);
  for (double v : s.throughput_mbps) x.push_back(v / 10.0);
  for (double v : s.download_time_s) x.push_back(v / 10.0);
  for (double v : s.next_chunk_sizes_mb) x.push_back(v / 10.0);
  x.push_back(s.remaining_fraction);
  return x;
}

struct StepOutcome {
  StreamState next_state;
  double download_time_s = 0.0;
  double rebuffer_time_s = 0.0;
  double chosen_bitrate_kbps = 0.0;
  std::size_t level = 0;
  bool done = false;
};

// Chunk-level virtual player.  Each step downloads one chunk through the
// trace, charges rebuffering when the buffer runs dry during the download,
// and idle-waits when the buffer would overflow.  The whole trajectory is a
// pure function of (trace, video, loss, seed, actions).
class StreamEnv {
 public:
  // Traces shorter than this cannot start an episode; longer traces wrap
  // around to their start when an episode outlives them.
  static constexpr double kMinTraceDuration = 10.0;

  StreamEnv(NetworkTrace trace, VideoSpec video, LossModel loss,
            std::uint64_t seed)
      : trace_(std::move(trace)), video_(std::move(video)), loss_(loss) {
    validate_trace(trace_);
    validate_video(video_);
    validate_loss(loss_);
    if (trace_.duration() < kMinTraceDuration) {
      throw std::invalid_argument(
          "trace '" + trace_.id + "' too short for an episode: " +
          std::to_string(trace_.duration()) + " s < " +
          std::to_string(kMinTraceDuration) + " s");
    }
    reset(seed);
  }

  // Rewinds to the start of the video with an empty buffer and a playhead
  // offset derived deterministically from the seed.
  const StreamState& reset(std::uint64_t seed) {
    Rng rng(derive_seed(seed, /*tag=*/0x656e76ULL));
    playhead_s_ = trace_.first_timestamp() +
                  uniform01(rng) * trace_.duration();
    state_ = StreamState{};
    state_.buffer_capacity_s = video_.buffer_capacity_s;
    state_.next_chunk_sizes_mb = chunk_sizes_at(0);
    done_ = false;
    return state_;
  }

  const StreamState& state() const { return state_; }
  bool done() const { return done_; }
  const VideoSpec& video() const { return video_; }

  StepOutcome step(std::size_t action) {
    if (done_) throw std::logic_error("step() after episode end");
    if (action >= video_.levels()) {
      throw std::out_of_range("action " + std::to_string(action) +
                              " out of range [0, " +
                              std::to_string(video_.levels()) + ")");
    }
    const std::size_t chunk = state_.chunk_index;
    const double size_mb = video_.chunk_sizes_mb[action][chunk];

    const double survival = 1.0 - loss_.loss_probability;
    const double raw_time = integrate_download(size_mb);
    const double download_time = raw_time / survival;  // retransmission inflation
    playhead_s_ += download_time;

    const double rebuffer = std::max(download_time - state_.buffer_s, 0.0);
    double buffer = std::max(state_.buffer_s - download_time, 0.0) +
                    video_.chunk_duration_s;
    if (buffer > video_.buffer_capacity_s) {
      // Buffer full: the player idles until there is room again.  Time
      // passes on the channel but no penalty accrues.
      playhead_s_ += buffer - video_.buffer_capacity_s;
      buffer = video_.buffer_capacity_s;
    }

    StepOutcome out;
    out.download_time_s = download_time;
    out.rebuffer_time_s = rebuffer;
    out.level = action;
    out.chosen_bitrate_kbps = video_.bitrate_levels_kbps[action];
    out.done = (chunk + 1 == video_.num_chunks);

    StreamState next = state_;
    next.last_level = action;
    next.buffer_s = buffer;
    shift_history(next.throughput_mbps, size_mb / download_time);
    shift_history(next.download_time_s, download_time);
    next.chunk_index = chunk + 1;
    next.remaining_fraction =
        static_cast<double>(video_.num_chunks - next.chunk_index) /
        static_cast<double>(video_.num_chunks);
    next.next_chunk_sizes_mb = out.done ? std::vector<double>(video_.levels(), 0.0)
                                        : chunk_sizes_at(next.chunk_index);

    state_ = next;
    done_ = out.done;
    out.next_state = state_;
    return out;
  }

 private:
  std::vector<double> chunk_sizes_at(std::size_t chunk) const {
    std::vector<double> sizes(video_.levels());
    for (std::size_t l = 0; l < video_.levels(); ++l) {
      sizes[l] = video_.chunk_sizes_mb[l][chunk];
    }
    return sizes;
  }

  static void shift_history(std::array<double, kHistoryLen>& h, double v) {
    for (std::size_t i = kHistoryLen - 1; i > 0; --i) h[i] = h[i - 1];
    h[0] = v;
  }

  double wrap(double t) const {
    const double rel = std::fmod(t - trace_.first_timestamp(), trace_.duration());
    return trace_.first_timestamp() + rel;
  }

  // Walks the zero-order-hold trace from the playhead until size_mb megabits
  // have been delivered at the loss-scaled channel rate.  Returns elapsed
  // trace time in seconds.
  double integrate_download(double size_mb) const {
    double remaining = size_mb;
    double elapsed = 0.0;
    while (remaining > 0.0) {
      const double t = wrap(playhead_s_ + elapsed);
      const double rate = effective_throughput(trace_, t, loss_);
      // End of the current hold interval: next sample boundary or trace end.
      auto it = std::upper_bound(trace_.timestamps_s.begin(),
                                 trace_.timestamps_s.end(), t);
      const double boundary = (it == trace_.timestamps_s.end())
                                  ? trace_.last_timestamp()
                                  : *it;
      const double span = boundary - t;
      const double deliverable = rate * span;
      if (deliverable >= remaining) {
        elapsed += remaining / rate;
        return elapsed;
      }
      remaining -= deliverable;
      elapsed += span;
    }
    return elapsed;
  }

  NetworkTrace trace_;
  VideoSpec video_;
  LossModel loss_;
  double playhead_s_ = 0.0;
  StreamState state_;
  bool done_ = false;
};

}  // namespace abr
