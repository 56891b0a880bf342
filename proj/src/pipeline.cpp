#include "mhanet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "mhanet/checkpoint.hpp"
#include "mhanet/csp.hpp"

namespace mhanet {

namespace {

template <typename U>
U read_number(const nlohmann::json& v, const std::string& key) {
  if constexpr (std::is_floating_point_v<U>) {
    if (!v.is_number()) fail(ErrorKind::Config, "config key '", key, "' must be a number");
  } else {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      fail(ErrorKind::Config, "config key '", key, "' must be a non-negative integer");
    }
  }
  return v.get<U>();
}

std::string read_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) fail(ErrorKind::Config, "config key '", key, "' must be a string");
  return v.get<std::string>();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min(worker_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!first) first = std::current_exception();
          }
        }
      });
    }
  }
  if (first) std::rethrow_exception(first);
}

void check_subject_id(const std::string& id) {
  if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos) {
    fail(ErrorKind::Data, "subject id '", id, "' cannot be used as a directory name");
  }
}

struct SubjectRun {
  SubjectResult result;
  CheckpointBundle bundle;
};

SubjectRun train_subject(const RunConfig& config, const Recording& rec) {
  if (std::abs(rec.sample_rate - config.sample_rate) > 1e-6 * config.sample_rate) {
    fail(ErrorKind::Data, "recording ", rec.subject_id, " is sampled at ", rec.sample_rate,
         " Hz, config expects ", config.sample_rate);
  }
  if (rec.channels < config.c_out) {
    fail(ErrorKind::Data, "recording ", rec.subject_id, " has ", rec.channels,
         " channels, fewer than c_out=", config.c_out);
  }
  const auto splits = make_splits(rec, config.windowing(), config.split_ratios, config.seed);
  const auto csp = fit_csp(splits.train, config.c_out, config.shrinkage);
  const CspLdaBaseline baseline(csp, splits.train);

  SubjectRun run;
  auto trained = train(project_windows(csp, splits.train), project_windows(csp, splits.val),
                       project_windows(csp, splits.test), config.train_config());
  run.result.report = std::move(trained.report);
  run.result.report.subject_id = rec.subject_id;
  run.result.baseline_accuracy = baseline.accuracy(splits.test);
  run.bundle = {rec.subject_id, std::move(trained.params), csp, config.windowing(),
                config.split_ratios, config.seed};
  return run;
}

void write_subject(const std::filesystem::path& dir, const SubjectRun& run) {
  std::filesystem::create_directories(dir);
  save_checkpoint(run.bundle, dir / "checkpoint.mhck");
  write_text(dir / "metrics.csv", run.result.report.metrics_csv());
  auto report = run.result.report.to_json();
  report["baseline_csp_lda_accuracy"] = run.result.baseline_accuracy;
  write_text(dir / "report.json", report.dump(2) + "\n");
}

void write_run(const RunConfig& config, const std::filesystem::path& out,
               const RunSummary& summary, const std::vector<SubjectRun>& runs) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) fail(ErrorKind::Io, "cannot create ", out.string(), ": ", ec.message());
  write_text(out / "effective_config.json", config.to_json().dump(2) + "\n");
  for (const auto& run : runs) write_subject(out / run.bundle.subject_id, run);
  write_text(out / "summary.json", summary.to_json().dump(2) + "\n");
}

std::vector<Recording> load_for(const RunConfig& config) {
  auto recs = load_recordings(config.data_dir);
  for (const auto& r : recs) check_subject_id(r.subject_id);
  return recs;
}

}  // namespace

// --- RunConfig --------------------------------------------------------------

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::Config, "config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "data_dir") c.data_dir = read_string(v, key);
    else if (key == "output_dir") c.output_dir = read_string(v, key);
    else if (key == "c_out") c.c_out = read_number<std::size_t>(v, key);
    else if (key == "k1") c.k1 = read_number<std::size_t>(v, key);
    else if (key == "dilation") c.dilation = read_number<std::size_t>(v, key);
    else if (key == "shrinkage") c.shrinkage = read_number<double>(v, key);
    else if (key == "sample_rate") c.sample_rate = read_number<double>(v, key);
    else if (key == "window_seconds") c.window_seconds = read_number<double>(v, key);
    else if (key == "train_hop_seconds") c.train_hop_seconds = read_number<double>(v, key);
    else if (key == "eval_hop_seconds") c.eval_hop_seconds = read_number<double>(v, key);
    else if (key == "batch_size") c.batch_size = read_number<std::size_t>(v, key);
    else if (key == "max_epochs") c.max_epochs = read_number<std::size_t>(v, key);
    else if (key == "patience") c.patience = read_number<std::size_t>(v, key);
    else if (key == "lr") c.lr = read_number<double>(v, key);
    else if (key == "weight_decay") c.weight_decay = read_number<double>(v, key);
    else if (key == "seed") c.seed = read_number<std::uint64_t>(v, key);
    else if (key == "ablation") c.ablation = read_string(v, key);
    else if (key == "split_ratios") {
      if (!v.is_array() || v.size() != 3) {
        fail(ErrorKind::Config, "config key 'split_ratios' must be an array of 3 integers");
      }
      c.split_ratios = {read_number<std::size_t>(v[0], key), read_number<std::size_t>(v[1], key),
                        read_number<std::size_t>(v[2], key)};
    } else {
      fail(ErrorKind::Config, "unknown config key '", key, "'");
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::Config, "cannot read config: ", e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, "config ", path.string(), " is not valid JSON: ", e.what());
  }
  return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
  return {{"data_dir", data_dir},
          {"output_dir", output_dir},
          {"c_out", c_out},
          {"k1", k1},
          {"dilation", dilation},
          {"shrinkage", shrinkage},
          {"sample_rate", sample_rate},
          {"window_seconds", window_seconds},
          {"train_hop_seconds", train_hop_seconds},
          {"eval_hop_seconds", eval_hop_seconds},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"seed", seed},
          {"ablation", Ablation::parse(ablation).name()},
          {"split_ratios", {split_ratios.train, split_ratios.val, split_ratios.test}}};
}

void RunConfig::validate() const {
  if (!(sample_rate > 0.0)) fail(ErrorKind::Config, "sample_rate must be positive");
  for (auto [name, v] : {std::pair{"window_seconds", window_seconds},
                         std::pair{"train_hop_seconds", train_hop_seconds},
                         std::pair{"eval_hop_seconds", eval_hop_seconds}}) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorKind::Config, name, " must be positive");
  }
  if (seconds_to_samples(train_hop_seconds, sample_rate) == 0 ||
      seconds_to_samples(eval_hop_seconds, sample_rate) == 0) {
    fail(ErrorKind::Config, "hops must span at least one sample");
  }
  if (c_out < 2 || c_out % 2 != 0) fail(ErrorKind::Config, "c_out must be even and >= 2");
  if (k1 == 0) fail(ErrorKind::Config, "k1 must be positive");
  if (!(shrinkage >= 0.0 && shrinkage < 1.0)) fail(ErrorKind::Config, "shrinkage outside [0,1)");
  if (split_ratios.train == 0 || split_ratios.val == 0 || split_ratios.test == 0) {
    fail(ErrorKind::Config, "split_ratios entries must be positive");
  }
  train_config().validate();
}

std::size_t RunConfig::samples() const { return seconds_to_samples(window_seconds, sample_rate); }

ModelConfig RunConfig::model_config() const { return {c_out, samples(), k1, dilation}; }

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.batch_size = batch_size;
  t.max_epochs = max_epochs;
  t.patience = patience;
  t.lr = lr;
  t.weight_decay = weight_decay;
  t.seed = seed;
  t.ablation = Ablation::parse(ablation);
  t.model = model_config();
  return t;
}

WindowingConfig RunConfig::windowing() const {
  return {window_seconds, train_hop_seconds, eval_hop_seconds};
}

// --- summaries ----------------------------------------------------------------

double RunSummary::mean_accuracy() const {
  if (subjects.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : subjects) s += r.report.test_accuracy;
  return s / static_cast<double>(subjects.size());
}

double RunSummary::sd_accuracy() const {
  if (subjects.size() < 2) return 0.0;
  const double mu = mean_accuracy();
  double s = 0.0;
  for (const auto& r : subjects) s += (r.report.test_accuracy - mu) * (r.report.test_accuracy - mu);
  return std::sqrt(s / static_cast<double>(subjects.size() - 1));
}

double RunSummary::mean_baseline() const {
  if (subjects.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : subjects) s += r.baseline_accuracy;
  return s / static_cast<double>(subjects.size());
}

nlohmann::json RunSummary::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : subjects) {
    per.push_back({{"subject", r.report.subject_id},
                   {"test_accuracy", r.report.test_accuracy},
                   {"test_loss", r.report.test_loss},
                   {"stopped_epoch", r.report.stopped_epoch},
                   {"best_epoch", r.report.best_epoch},
                   {"baseline_csp_lda_accuracy", r.baseline_accuracy}});
  }
  return {{"ablation", ablation},
          {"param_count", param_count},
          {"subjects", per},
          {"mean_test_accuracy", mean_accuracy()},
          {"sd_test_accuracy_over_subjects", sd_accuracy()},
          {"mean_baseline_csp_lda_accuracy", mean_baseline()}};
}

nlohmann::json EvalOutcome::to_json() const {
  return {{"subject", subject_id}, {"windows", windows}, {"test_loss", loss},
          {"test_accuracy", accuracy}};
}

// --- runs -----------------------------------------------------------------------

RunSummary run_training(const RunConfig& config, const std::vector<Recording>& recordings,
                        const std::filesystem::path& out_dir) {
  config.validate();
  if (recordings.empty()) fail(ErrorKind::Data, "no recordings to train on");
  for (const auto& r : recordings) check_subject_id(r.subject_id);
  std::vector<SubjectRun> runs(recordings.size());
  parallel_for(recordings.size(), [&](std::size_t i) { runs[i] = train_subject(config, recordings[i]); });

  RunSummary summary;
  summary.ablation = Ablation::parse(config.ablation).name();
  summary.param_count = count_params(config.model_config(), Ablation::parse(config.ablation));
  for (const auto& run : runs) summary.subjects.push_back(run.result);
  if (!out_dir.empty()) write_run(config, out_dir, summary, runs);
  return summary;
}

RunSummary run_training(const RunConfig& config) {
  config.validate();
  return run_training(config, load_for(config), config.output_dir);
}

EvalOutcome run_eval(const std::filesystem::path& checkpoint,
                     const std::filesystem::path& data_dir) {
  const auto bundle = load_checkpoint(checkpoint);
  const auto recs = load_recordings(data_dir);
  const auto it = std::find_if(recs.begin(), recs.end(),
                               [&](const Recording& r) { return r.subject_id == bundle.subject_id; });
  if (it == recs.end()) {
    fail(ErrorKind::Data, "no recording for subject '", bundle.subject_id, "' in ",
         data_dir.string());
  }
  if (it->channels != bundle.csp.c_raw) {
    fail(ErrorKind::Data, "recording has ", it->channels, " channels, checkpoint expects ",
         bundle.csp.c_raw);
  }
  const auto splits = make_splits(*it, bundle.windowing, bundle.ratios, bundle.split_seed);
  if (splits.test.samples != bundle.params.config.samples) {
    fail(ErrorKind::Data, "recording yields ", splits.test.samples,
         "-sample windows, checkpoint expects ", bundle.params.config.samples);
  }
  const auto result = evaluate(bundle.params, project_windows(bundle.csp, splits.test));
  return {bundle.subject_id, splits.test.size(), result.loss, result.accuracy};
}

std::vector<Ablation> parse_variants(const std::string& list) {
  std::vector<Ablation> out;
  std::stringstream ss(list);
  std::string token;
  while (std::getline(ss, token, ',')) {
    token.erase(0, token.find_first_not_of(" \t"));
    token.erase(token.find_last_not_of(" \t") + 1);
    if (token.empty()) continue;
    out.push_back(Ablation::parse(token));
  }
  if (out.empty()) fail(ErrorKind::Config, "no ablation variants given");
  return out;
}

AblationTable run_ablation(const RunConfig& config, const std::vector<Recording>& recordings,
                           const std::vector<Ablation>& variants, bool write) {
  config.validate();
  if (recordings.empty()) fail(ErrorKind::Data, "no recordings to train on");
  for (const auto& r : recordings) check_subject_id(r.subject_id);
  std::vector<RunConfig> configs{config};
  configs.front().ablation = "none";
  for (const auto& v : variants) {
    if (v == Ablation{}) continue;
    RunConfig c = config;
    c.ablation = v.name();
    c.validate();
    configs.push_back(c);
  }
  const std::size_t n_sub = recordings.size();
  std::vector<SubjectRun> runs(configs.size() * n_sub);
  parallel_for(runs.size(), [&](std::size_t k) {
    runs[k] = train_subject(configs[k / n_sub], recordings[k % n_sub]);
  });

  AblationTable table;
  const std::filesystem::path root = std::filesystem::path(config.output_dir) / "ablation";
  for (std::size_t v = 0; v < configs.size(); ++v) {
    RunSummary s;
    const auto ab = Ablation::parse(configs[v].ablation);
    s.ablation = ab.name();
    s.param_count = count_params(configs[v].model_config(), ab);
    std::vector<SubjectRun> mine(runs.begin() + static_cast<std::ptrdiff_t>(v * n_sub),
                                 runs.begin() + static_cast<std::ptrdiff_t>((v + 1) * n_sub));
    for (const auto& r : mine) s.subjects.push_back(r.result);
    if (write) write_run(configs[v], root / s.ablation, s, mine);
    table.rows.push_back(std::move(s));
  }
  if (write) {
    write_text(root / "ablation.json", table.to_json().dump(2) + "\n");
    write_text(root / "ablation.md", table.to_markdown());
  }
  return table;
}

AblationTable run_ablation(const RunConfig& config, const std::vector<Ablation>& variants) {
  config.validate();
  return run_ablation(config, load_for(config), variants, true);
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) rows_json.push_back(r.to_json());
  return {{"rows", rows_json}};
}

std::string AblationTable::to_markdown() const {
  std::ostringstream os;
  os << "| variant | params | mean acc | sd (subjects) | delta vs full |\n"
     << "|---|---:|---:|---:|---:|\n"
     << std::fixed << std::setprecision(4);
  const double full = rows.empty() ? 0.0 : rows.front().mean_accuracy();
  for (const auto& r : rows) {
    const std::string label = r.ablation == "full" ? "full" : "w/o " + r.ablation;
    os << "| " << label << " | " << r.param_count << " | " << r.mean_accuracy() << " | "
       << r.sd_accuracy() << " | " << std::showpos << r.mean_accuracy() - full << std::noshowpos
       << " |\n";
  }
  return os.str();
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("MHANET_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace mhanet
