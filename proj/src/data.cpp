#include "mhanet/data.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "mhanet/bytes.hpp"
#include "mhanet/error.hpp"
#include "mhanet/random.hpp"

namespace mhanet {

namespace {
constexpr char kRecordingMagic[4] = {'E', 'E', 'G', 'R'};
constexpr std::uint32_t kRecordingVersion = 1;

bool overlaps(const Window& a, const Window& b, std::size_t length) {
  return a.recording == b.recording && a.start < b.start + length && b.start < a.start + length;
}

WindowSet empty_like(const WindowSet& src, SplitTag tag) {
  WindowSet out;
  out.channels = src.channels;
  out.samples = src.samples;
  out.window_seconds = src.window_seconds;
  out.hop_seconds = src.hop_seconds;
  out.tag = tag;
  return out;
}
}  // namespace

void Recording::validate() const {
  if (!(sample_rate > 0.0f) || !std::isfinite(sample_rate)) {
    fail(ErrorKind::Data, "recording '", subject_id, "': sample rate must be positive");
  }
  if (channels == 0 || samples == 0) {
    fail(ErrorKind::Data, "recording '", subject_id, "': empty recording");
  }
  if (data.size() != channels * samples) {
    fail(ErrorKind::Data, "recording '", subject_id, "': data holds ", data.size(),
         " values, expected ", channels * samples);
  }
  if (labels.size() != samples) {
    fail(ErrorKind::Data, "recording '", subject_id, "': label track has ", labels.size(),
         " entries, expected ", samples);
  }
  for (auto l : labels) {
    if (l > 1) fail(ErrorKind::Data, "recording '", subject_id, "': label ", int(l), " not in {0,1}");
  }
}

std::size_t WindowSet::count_label(int label) const {
  return static_cast<std::size_t>(std::count_if(
      windows.begin(), windows.end(), [label](const Window& w) { return w.label == label; }));
}

std::size_t seconds_to_samples(double seconds, double sample_rate) {
  const double v = std::round(seconds * sample_rate);
  return v <= 0.0 ? 0 : static_cast<std::size_t>(v);
}

WindowSet window_dataset(const Recording& rec, double window_seconds, double hop_seconds,
                         std::size_t recording_index) {
  rec.validate();
  const std::size_t length = seconds_to_samples(window_seconds, rec.sample_rate);
  const std::size_t hop = seconds_to_samples(hop_seconds, rec.sample_rate);
  if (length == 0) fail(ErrorKind::Data, "window of ", window_seconds, " s has no samples");
  if (hop == 0) fail(ErrorKind::Data, "hop must be positive, got ", hop_seconds, " s");
  if (length > rec.samples) {
    fail(ErrorKind::Data, "window of ", length, " samples is longer than recording '",
         rec.subject_id, "' (", rec.samples, " samples)");
  }
  WindowSet set;
  set.channels = rec.channels;
  set.samples = length;
  set.window_seconds = window_seconds;
  set.hop_seconds = hop_seconds;
  for (std::size_t start = 0; start + length <= rec.samples; start += hop) {
    const auto first = rec.labels.begin() + static_cast<long>(start);
    const auto last = first + static_cast<long>(length);
    if (std::any_of(first, last, [&](std::uint8_t l) { return l != *first; })) continue;
    Window w;
    w.label = *first;
    w.start = start;
    w.recording = recording_index;
    w.raw.resize(rec.channels * length);
    for (std::size_t c = 0; c < rec.channels; ++c) {
      std::copy_n(rec.data.begin() + static_cast<long>(c * rec.samples + start), length,
                  w.raw.begin() + static_cast<long>(c * length));
    }
    set.windows.push_back(std::move(w));
  }
  return set;
}

Splits split_dataset(const WindowSet& windows, SplitRatios ratios, std::uint64_t seed) {
  const std::size_t n = windows.size();
  if (n < 10) fail(ErrorKind::Data, "need at least 10 windows to split, got ", n);
  const std::size_t total = ratios.train + ratios.val + ratios.test;
  if (ratios.train == 0 || total == 0) fail(ErrorKind::Config, "invalid split ratios");
  const std::size_t n_val = n * ratios.val / total;
  const std::size_t n_test = n * ratios.test / total;
  const std::size_t n_train = n - n_val - n_test;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& wa = windows.windows[a];
    const auto& wb = windows.windows[b];
    return wa.recording != wb.recording ? wa.recording < wb.recording : wa.start < wb.start;
  });
  Rng rng(seed);
  const std::size_t offset = rng.below(n);

  Splits out{empty_like(windows, SplitTag::Train), empty_like(windows, SplitTag::Val),
             empty_like(windows, SplitTag::Test)};
  std::vector<const Window*> held_out;
  std::vector<const Window*> train_candidates;
  for (std::size_t k = 0; k < n; ++k) {
    const Window& w = windows.windows[order[(offset + k) % n]];
    if (k < n_train) {
      train_candidates.push_back(&w);
    } else if (k < n_train + n_val) {
      out.val.windows.push_back(w);
      held_out.push_back(&w);
    } else {
      out.test.windows.push_back(w);
      held_out.push_back(&w);
    }
  }
  for (const Window* w : train_candidates) {
    const bool leaks = std::any_of(held_out.begin(), held_out.end(), [&](const Window* h) {
      return overlaps(*w, *h, windows.samples);
    });
    if (!leaks) out.train.windows.push_back(*w);
  }
  auto by_time = [](const Window& a, const Window& b) {
    return a.recording != b.recording ? a.recording < b.recording : a.start < b.start;
  };
  std::sort(out.train.windows.begin(), out.train.windows.end(), by_time);
  std::sort(out.val.windows.begin(), out.val.windows.end(), by_time);
  std::sort(out.test.windows.begin(), out.test.windows.end(), by_time);
  return out;
}

WindowSet thin_windows(const WindowSet& set, std::size_t min_gap) {
  WindowSet out = empty_like(set, set.tag);
  const Window* last = nullptr;
  for (const auto& w : set.windows) {
    if (last != nullptr && last->recording == w.recording && w.start < last->start + min_gap) {
      continue;
    }
    out.windows.push_back(w);
    last = &w;
  }
  return out;
}

Splits make_splits(const Recording& rec, const WindowingConfig& windowing, SplitRatios ratios,
                   std::uint64_t seed) {
  auto all = window_dataset(rec, windowing.window_seconds, windowing.train_hop_seconds);
  auto splits = split_dataset(all, ratios, seed);
  const auto gap = seconds_to_samples(windowing.eval_hop_seconds, rec.sample_rate);
  splits.val = thin_windows(splits.val, gap);
  splits.test = thin_windows(splits.test, gap);
  splits.val.hop_seconds = windowing.eval_hop_seconds;
  splits.test.hop_seconds = windowing.eval_hop_seconds;
  return splits;
}

std::vector<Recording> synth_generate(const SynthConfig& cfg) {
  if (!(cfg.class_gap > 0.0)) fail(ErrorKind::Config, "class_gap must be positive");
  if (cfg.channels < 2 * cfg.subspace_dim || cfg.subspace_dim == 0) {
    fail(ErrorKind::Config, "synthetic data needs at least ", 2 * cfg.subspace_dim, " channels");
  }
  const std::size_t n = seconds_to_samples(cfg.duration_seconds, cfg.sample_rate);
  const std::size_t segment = seconds_to_samples(cfg.segment_seconds, cfg.sample_rate);
  if (n == 0 || segment == 0) fail(ErrorKind::Config, "synthetic duration/segment too short");
  const double fs = cfg.sample_rate;
  const std::array<double, 2> carrier_hz{6.0, 11.0};
  const double envelope_tau = 0.25 * fs;  // samples
  const double a = std::exp(-1.0 / envelope_tau);
  const double b = std::sqrt(1.0 - a * a);
  const double amplitude = std::sqrt(2.0 * cfg.class_gap);

  std::vector<Recording> out;
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    Rng rng(derive_seed(cfg.seed, s));
    Eigen::MatrixXd g(cfg.channels, cfg.channels);
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
    const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();

    Recording rec;
    rec.subject_id = concat("S", s + 1 < 10 ? "0" : "", s + 1);
    rec.sample_rate = static_cast<float>(fs);
    rec.channels = cfg.channels;
    rec.samples = n;
    rec.data.assign(cfg.channels * n, 0.0f);
    rec.labels.resize(n);
    for (std::size_t t = 0; t < n; ++t) rec.labels[t] = static_cast<std::uint8_t>((t / segment) % 2);

    // One source per (class, subspace direction).
    const std::size_t sources = 2 * cfg.subspace_dim;
    std::vector<std::array<double, 2>> env_state(sources);
    std::vector<double> phase(sources);
    for (std::size_t j = 0; j < sources; ++j) {
      env_state[j] = {rng.normal(), rng.normal()};
      phase[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    std::vector<double> column(cfg.channels);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t c = 0; c < cfg.channels; ++c) column[c] = rng.normal();
      const int label = rec.labels[t];
      for (std::size_t j = 0; j < sources; ++j) {
        auto& e = env_state[j];
        e[0] = a * e[0] + b * rng.normal();
        e[1] = a * e[1] + b * rng.normal();
        const int cls = static_cast<int>(j / cfg.subspace_dim);
        if (cls != label) continue;
        const double envelope = std::sqrt(0.5 * (e[0] * e[0] + e[1] * e[1]));
        const double value =
            amplitude * envelope *
            std::sin(2.0 * std::numbers::pi * carrier_hz[cls] * static_cast<double>(t) / fs +
                     phase[j]);
        const auto dir = static_cast<Eigen::Index>(j);
        for (std::size_t c = 0; c < cfg.channels; ++c) {
          column[c] += value * basis(static_cast<Eigen::Index>(c), dir);
        }
      }
      for (std::size_t c = 0; c < cfg.channels; ++c) {
        rec.data[c * n + t] = static_cast<float>(column[c]);
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::uint8_t> encode_recording(const Recording& rec) {
  rec.validate();
  if (rec.subject_id.size() > 255) {
    fail(ErrorKind::Data, "subject id longer than 255 bytes");
  }
  ByteWriter w;
  w.put_raw(std::string_view(kRecordingMagic, 4));
  w.put<std::uint32_t>(kRecordingVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(rec.channels));
  w.put<std::uint64_t>(rec.samples);
  w.put_f32(rec.sample_rate);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(rec.subject_id.size()));
  w.put_raw(rec.subject_id);
  for (const float v : rec.data) w.put_f32(v);
  w.put_raw(std::span<const std::uint8_t>(rec.labels));
  return w.take();
}

Recording decode_recording(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "EEGR");
  const auto magic = r.get_raw(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kRecordingMagic)) {
    fail(ErrorKind::Format, "EEGR: bad magic at byte 0");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kRecordingVersion) {
    fail(ErrorKind::Format, "EEGR: unsupported version ", version, " at byte 4");
  }
  Recording rec;
  const std::size_t channels_at = r.offset();
  rec.channels = r.get<std::uint32_t>("channel count");
  const std::uint64_t samples = r.get<std::uint64_t>("sample count");
  rec.sample_rate = r.get_f32("sample rate");
  const auto id_len = r.get<std::uint8_t>("subject id length");
  rec.subject_id = r.get_string(id_len, "subject id");
  if (rec.channels == 0 || samples == 0) {
    fail(ErrorKind::Format, "EEGR: zero dimension at byte ", channels_at);
  }
  constexpr auto kMax = std::numeric_limits<std::size_t>::max();
  if (samples > kMax / rec.channels / sizeof(float)) {
    fail(ErrorKind::Format, "EEGR: dimension overflow at byte ", channels_at, " (", rec.channels,
         " x ", samples, ")");
  }
  rec.samples = static_cast<std::size_t>(samples);
  const std::size_t values = rec.channels * rec.samples;
  r.need(values * sizeof(float) + rec.samples, "payload");
  rec.data.resize(values);
  for (auto& v : rec.data) v = r.get_f32("sample");
  const auto labels = r.get_raw(rec.samples, "labels");
  rec.labels.assign(labels.begin(), labels.end());
  for (std::size_t i = 0; i < rec.labels.size(); ++i) {
    if (rec.labels[i] > 1) {
      fail(ErrorKind::Format, "EEGR: label byte ", int(rec.labels[i]), " at byte ",
           r.offset() - rec.samples + i, " is not 0 or 1");
    }
  }
  if (r.remaining() != 0) {
    fail(ErrorKind::Format, "EEGR: ", r.remaining(), " trailing bytes at byte ", r.offset());
  }
  return rec;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '", path.string(), "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write '", path.string(), "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to '", path.string(), "'");
}

void save_recording(const Recording& rec, const std::filesystem::path& path) {
  write_file(path, encode_recording(rec));
}

Recording load_recording(const std::filesystem::path& path) {
  try {
    return decode_recording(read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Format) fail(ErrorKind::Format, path.string(), ": ", e.what());
    throw;
  }
}

std::vector<Recording> load_recordings(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    fail(ErrorKind::Data, "data directory '", dir.string(), "' does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".eegr") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorKind::Data, "no .eegr recordings in '", dir.string(), "'");
  std::vector<Recording> out;
  for (const auto& f : files) out.push_back(load_recording(f));
  return out;
}

}  // namespace mhanet
