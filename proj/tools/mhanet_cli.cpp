// mhanet command-line front end over the C API.
#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "mhanet/mhanet.h"

namespace {

int exit_code(mhanet_status s) {
  switch (s) {
    case MHANET_OK: return 0;
    case MHANET_ERR_CONFIG: return 2;
    case MHANET_ERR_DATA:
    case MHANET_ERR_FORMAT:
    case MHANET_ERR_DIMENSION: return 3;
    case MHANET_ERR_NUMERICAL: return 4;
    default: return 1;
  }
}

int report(mhanet_status s) {
  if (s != MHANET_OK) {
    std::fprintf(stderr, "error [%s]: %s\n", mhanet_status_name(s), mhanet_last_error());
  }
  return exit_code(s);
}

int with_result(mhanet_status s, mhanet_result* result, bool json) {
  if (s != MHANET_OK) return report(s);
  std::fputs(json ? mhanet_result_json(result) : mhanet_result_text(result), stdout);
  if (json) std::fputc('\n', stdout);
  mhanet_result_free(result);
  return 0;
}

int load(const std::string& path, mhanet_config** config) {
  const auto s = path.empty() ? mhanet_config_default(config) : mhanet_config_load(path.c_str(), config);
  return s == MHANET_OK ? 0 : report(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MHANet auditory attention detection on CSP-filtered EEG"};
  app.require_subcommand(1);
  bool json = false;
  app.add_flag("--json", json, "Print machine-readable JSON instead of text");

  std::string out_dir;
  std::size_t subjects = 2;
  std::uint64_t seed = 1;
  double class_gap = 4.0;
  auto* synth = app.add_subcommand("synth", "Write synthetic EEGR recordings");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--subjects", subjects, "Number of subjects")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--class-gap", class_gap, "Class separation (variance added per class)")
      ->check(CLI::PositiveNumber);

  std::string config_path;
  auto* train = app.add_subcommand("train", "Fit CSP, train per subject, write checkpoints");
  train->add_option("--config", config_path, "Run config JSON")->required();

  std::string checkpoint;
  std::string data_dir;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on its subject's test split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Directory of EEGR recordings")->required();

  std::string variants = "ca,mta,mga,mta+ca,stc";
  auto* ablate = app.add_subcommand("ablate", "Train the full model and each ablated variant");
  ablate->add_option("--config", config_path, "Run config JSON")->required();
  ablate->add_option("--variants", variants, "Comma-separated variants");

  auto* params = app.add_subcommand("params", "Count trainable parameters");
  params->add_option("--config", config_path, "Run config JSON (defaults if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; malformed command lines are usage errors
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (synth->parsed()) {
    const auto s = mhanet_synth(out_dir.c_str(), subjects, seed, class_gap);
    if (s != MHANET_OK) return report(s);
    std::printf("wrote %zu recordings to %s\n", subjects, out_dir.c_str());
    return 0;
  }
  if (eval->parsed()) {
    mhanet_result* r = nullptr;
    const auto s = mhanet_eval(checkpoint.c_str(), data_dir.c_str(), &r);
    return with_result(s, r, json);
  }

  mhanet_config* config = nullptr;
  if (const int rc = load(config_path, &config); rc != 0) return rc;
  int rc = 0;
  if (params->parsed()) {
    std::size_t n = 0;
    const auto s = mhanet_count_params(config, &n);
    if (s != MHANET_OK) {
      rc = report(s);
    } else if (json) {
      std::printf("{\"param_count\": %zu, \"reference\": \"0.02M\"}\n", n);
    } else {
      std::printf("trainable parameters: %zu (%.4fM; reference 0.02M)\n", n,
                  static_cast<double>(n) / 1e6);
    }
  } else if (train->parsed()) {
    mhanet_result* r = nullptr;
    const auto s = mhanet_train(config, &r);
    rc = with_result(s, r, json);
  } else if (ablate->parsed()) {
    mhanet_result* r = nullptr;
    const auto s = mhanet_ablate(config, variants.c_str(), &r);
    rc = with_result(s, r, json);
  }
  mhanet_config_free(config);
  return rc;
}
