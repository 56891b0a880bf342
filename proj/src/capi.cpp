#include "mhanet/mhanet.h"

#include <iomanip>
#include <new>
#include <sstream>
#include <string>

#include "mhanet/pipeline.hpp"

struct mhanet_config {
  mhanet::RunConfig config;
  std::string json;
};

struct mhanet_result {
  double accuracy = 0.0;
  std::string json;
  std::string text;
};

namespace {

thread_local std::string last_error;

mhanet_status to_status(mhanet::ErrorKind kind) {
  using mhanet::ErrorKind;
  switch (kind) {
    case ErrorKind::Usage: return MHANET_ERR_USAGE;
    case ErrorKind::Config: return MHANET_ERR_CONFIG;
    case ErrorKind::Data: return MHANET_ERR_DATA;
    case ErrorKind::Numerical: return MHANET_ERR_NUMERICAL;
    case ErrorKind::Dimension: return MHANET_ERR_DIMENSION;
    case ErrorKind::Format: return MHANET_ERR_FORMAT;
    case ErrorKind::Io: return MHANET_ERR_IO;
  }
  return MHANET_ERR_INTERNAL;
}

template <typename F>
mhanet_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return MHANET_OK;
  } catch (const mhanet::Error& e) {
    last_error = e.what();
    return to_status(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return MHANET_ERR_INTERNAL;
}

void require(const void* p, const char* what) {
  if (p == nullptr) mhanet::fail(mhanet::ErrorKind::Usage, what, " must not be null");
}

mhanet_config* wrap(mhanet::RunConfig c) {
  auto* h = new mhanet_config{std::move(c), {}};
  h->json = h->config.to_json().dump(2);
  return h;
}

std::string summary_text(const mhanet::RunSummary& s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (const auto& r : s.subjects) {
    os << r.report.subject_id << ": test_accuracy=" << r.report.test_accuracy
       << " csp_lda=" << r.baseline_accuracy << " stopped_epoch=" << r.report.stopped_epoch
       << " best_epoch=" << r.report.best_epoch << "\n";
  }
  os << "mean test accuracy " << s.mean_accuracy() << " +/- " << s.sd_accuracy()
     << " (SD over " << s.subjects.size() << " subjects), params " << s.param_count << "\n";
  return os.str();
}

}  // namespace

extern "C" {

const char* mhanet_version(void) { return "0.1.0"; }

const char* mhanet_status_name(mhanet_status status) {
  switch (status) {
    case MHANET_OK: return "ok";
    case MHANET_ERR_USAGE: return "usage";
    case MHANET_ERR_CONFIG: return "config";
    case MHANET_ERR_DATA: return "data";
    case MHANET_ERR_NUMERICAL: return "numerical";
    case MHANET_ERR_DIMENSION: return "dimension";
    case MHANET_ERR_FORMAT: return "format";
    case MHANET_ERR_IO: return "io";
    case MHANET_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* mhanet_last_error(void) { return last_error.c_str(); }

mhanet_status mhanet_config_default(mhanet_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = wrap(mhanet::RunConfig{});
  });
}

mhanet_status mhanet_config_load(const char* path, mhanet_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = wrap(mhanet::RunConfig::load(path));
  });
}

mhanet_status mhanet_config_parse(const char* json, mhanet_config** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
      mhanet::fail(mhanet::ErrorKind::Config, "config is not valid JSON: ", e.what());
    }
    *out = wrap(mhanet::RunConfig::from_json(j));
  });
}

mhanet_status mhanet_config_json(const mhanet_config* config, const char** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = config->json.c_str();
  });
}

void mhanet_config_free(mhanet_config* config) { delete config; }

mhanet_status mhanet_count_params(const mhanet_config* config, size_t* out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    const auto& c = config->config;
    *out = mhanet::count_params(c.model_config(), mhanet::Ablation::parse(c.ablation));
  });
}

mhanet_status mhanet_synth(const char* out_dir, size_t subjects, uint64_t seed,
                           double class_gap) {
  return guarded([&] {
    require(out_dir, "out_dir");
    if (subjects == 0) mhanet::fail(mhanet::ErrorKind::Config, "subjects must be positive");
    if (!(class_gap > 0.0)) mhanet::fail(mhanet::ErrorKind::Config, "class gap must be positive");
    mhanet::SynthConfig cfg;
    cfg.subjects = subjects;
    cfg.seed = seed;
    cfg.class_gap = class_gap;
    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) mhanet::fail(mhanet::ErrorKind::Io, "cannot create ", dir.string(), ": ", ec.message());
    for (const auto& rec : mhanet::synth_generate(cfg)) {
      mhanet::save_recording(rec, dir / (rec.subject_id + ".eegr"));
    }
  });
}

mhanet_status mhanet_train(const mhanet_config* config, mhanet_result** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    const auto summary = mhanet::run_training(config->config);
    *out = new mhanet_result{summary.mean_accuracy(), summary.to_json().dump(2),
                             summary_text(summary)};
  });
}

mhanet_status mhanet_eval(const char* checkpoint, const char* data_dir, mhanet_result** out) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(data_dir, "data_dir");
    require(out, "out");
    const auto r = mhanet::run_eval(checkpoint, data_dir);
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << r.subject_id << ": test_accuracy=" << r.accuracy
       << " test_loss=" << r.loss << " windows=" << r.windows << "\n";
    *out = new mhanet_result{r.accuracy, r.to_json().dump(2), os.str()};
  });
}

mhanet_status mhanet_ablate(const mhanet_config* config, const char* variants,
                            mhanet_result** out) {
  return guarded([&] {
    require(config, "config");
    require(variants, "variants");
    require(out, "out");
    const auto table = mhanet::run_ablation(config->config, mhanet::parse_variants(variants));
    *out = new mhanet_result{table.rows.front().mean_accuracy(), table.to_json().dump(2),
                             table.to_markdown()};
  });
}

double mhanet_result_accuracy(const mhanet_result* result) {
  return result ? result->accuracy : 0.0;
}

const char* mhanet_result_json(const mhanet_result* result) {
  return result ? result->json.c_str() : "";
}

const char* mhanet_result_text(const mhanet_result* result) {
  return result ? result->text.c_str() : "";
}

void mhanet_result_free(mhanet_result* result) { delete result; }

}  // extern "C"
