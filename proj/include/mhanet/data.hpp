#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mhanet {

/// A continuous, already-preprocessed EEG recording with a per-sample binary
/// attention label.
struct Recording {
  std::string subject_id;
  float sample_rate = 128.0f;
  std::size_t channels = 0;
  std::size_t samples = 0;
  std::vector<float> data;            // [channels x samples], row-major
  std::vector<std::uint8_t> labels;   // one per sample, 0 or 1

  void validate() const;
  bool operator==(const Recording&) const = default;
};

struct Window {
  std::vector<float> raw;  // [channels x samples], row-major
  int label = 0;
  std::size_t start = 0;      // first sample index in the source recording
  std::size_t recording = 0;  // index of the source recording
};

enum class SplitTag { Unassigned, Train, Val, Test };

struct WindowSet {
  std::size_t channels = 0;
  std::size_t samples = 0;
  double window_seconds = 0.0;
  double hop_seconds = 0.0;
  SplitTag tag = SplitTag::Unassigned;
  std::vector<Window> windows;

  std::size_t size() const { return windows.size(); }
  bool empty() const { return windows.empty(); }
  std::size_t count_label(int label) const;
};

/// round(seconds * rate), as used for both windows and hops.
std::size_t seconds_to_samples(double seconds, double sample_rate);

/// Slides a window of `window_seconds` every `hop_seconds`; windows whose
/// label track is not constant are dropped.
WindowSet window_dataset(const Recording& rec, double window_seconds, double hop_seconds,
                         std::size_t recording_index = 0);

struct SplitRatios {
  std::size_t train = 8;
  std::size_t val = 1;
  std::size_t test = 1;
};

struct Splits {
  WindowSet train;
  WindowSet val;
  WindowSet test;
};

/// Contiguous block split in time order. Validation and test receive
/// floor(n*ratio/total) windows each and the remainder goes to training. The
/// seed picks a cyclic offset for where the blocks start. Training windows
/// that share any sample with a held-out window are removed.
Splits split_dataset(const WindowSet& windows, SplitRatios ratios, std::uint64_t seed);

/// Keeps windows so that consecutive kept windows of one recording start at
/// least `min_gap` samples apart.
WindowSet thin_windows(const WindowSet& set, std::size_t min_gap);

struct WindowingConfig {
  double window_seconds = 1.0;
  double train_hop_seconds = 0.5;
  double eval_hop_seconds = 1.0;
};

/// window_dataset at the training hop, split_dataset, then thin validation
/// and test down to the evaluation hop.
Splits make_splits(const Recording& rec, const WindowingConfig& windowing, SplitRatios ratios,
                   std::uint64_t seed);

struct SynthConfig {
  std::size_t subjects = 2;
  std::size_t channels = 32;
  double sample_rate = 128.0;
  double duration_seconds = 600.0;
  double class_gap = 4.0;
  std::uint64_t seed = 1;
  double segment_seconds = 5.0;
  std::size_t subspace_dim = 2;
};

/// Two-class recordings: each class drives extra variance into its own
/// random channel subspace (the two are orthogonal), carried by a
/// class-specific rhythm under a slow random envelope, on top of unit white
/// noise. Labels alternate every `segment_seconds`.
std::vector<Recording> synth_generate(const SynthConfig& cfg);

std::vector<std::uint8_t> encode_recording(const Recording& rec);
Recording decode_recording(std::span<const std::uint8_t> bytes);
void save_recording(const Recording& rec, const std::filesystem::path& path);
Recording load_recording(const std::filesystem::path& path);

/// All *.eegr files in `dir`, sorted by file name.
std::vector<Recording> load_recordings(const std::filesystem::path& dir);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace mhanet
