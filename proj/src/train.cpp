#include "mhanet/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "mhanet/random.hpp"
#include "mhanet/stc.hpp"

namespace mhanet {

void TrainConfig::validate() const {
  if (batch_size == 0) fail(ErrorKind::Config, "batch_size must be positive");
  if (max_epochs == 0) fail(ErrorKind::Config, "max_epochs must be positive");
  if (patience == 0) fail(ErrorKind::Config, "patience must be positive");
  if (patience >= max_epochs) {
    fail(ErrorKind::Config, "patience (", patience, ") must be below max_epochs (", max_epochs, ")");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) fail(ErrorKind::Config, "lr must be positive, got ", lr);
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    fail(ErrorKind::Config, "weight_decay must be non-negative, got ", weight_decay);
  }
  model.validate(ablation);
}

template <typename T>
void optimizer_step(std::span<ParamSlot<T>> slots, OptimizerState& state,
                    const AdamWOptions& o) {
  if (state.m.empty()) {
    for (const auto& s : slots) {
      state.m.emplace_back(s.tensor.numel(), 0.0);
      state.v.emplace_back(s.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != slots.size()) {
    fail(ErrorKind::Usage, "optimizer state tracks ", state.m.size(), " tensors, got ",
         slots.size());
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].tensor.has_grad()) {
      fail(ErrorKind::Usage, "optimizer: parameter ", i, " has no gradient");
    }
    if (state.m[i].size() != slots[i].tensor.numel()) {
      fail(ErrorKind::Usage, "optimizer: parameter ", i, " changed size");
    }
  }
  ++state.step;
  const double step = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, step);
  const double c2 = 1.0 - std::pow(o.beta2, step);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto theta = slots[i].tensor.mutable_data();
    const auto g = slots[i].tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const double wd = slots[i].decay ? o.weight_decay : 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g[j];
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * gj;
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * gj * gj;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      const double t = theta[j];
      theta[j] = static_cast<T>(t - o.lr * (m_hat / (std::sqrt(v_hat) + o.eps) + wd * t));
    }
  }
}

template void optimizer_step<float>(std::span<ParamSlot<float>>, OptimizerState&,
                                    const AdamWOptions&);
template void optimizer_step<double>(std::span<ParamSlot<double>>, OptimizerState&,
                                     const AdamWOptions&);

bool EarlyStopping::update(double val_loss) {
  ++epochs_;
  improved_ = epochs_ == 1 || val_loss < best_;
  if (improved_) {
    best_ = val_loss;
    best_epoch_ = epochs_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_;
}

Dataset project_windows(const CSPModel& csp, const WindowSet& set) {
  if (set.empty()) fail(ErrorKind::Data, "cannot project an empty window set");
  if (set.channels != csp.c_raw) {
    fail(ErrorKind::Data, "windows have ", set.channels, " channels, CSP expects ", csp.c_raw);
  }
  const std::size_t per = csp.c_out * set.samples;
  std::vector<float> data(set.size() * per);
  Dataset out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    project_window(csp, set.windows[i].raw, set.samples,
                   std::span<float>(data.data() + i * per, per));
    out.labels.push_back(set.windows[i].label);
  }
  out.inputs = Tensor(Shape{set.size(), csp.c_out, 1, set.samples}, std::move(data));
  return out;
}

namespace {

constexpr std::size_t kEvalBatch = 256;

Tensor gather(const Dataset& data, std::span<const std::size_t> rows) {
  const auto& shape = data.inputs.shape();
  const std::size_t per = shape[1] * shape[2] * shape[3];
  std::vector<float> out(rows.size() * per);
  const auto src = data.inputs.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * per), per,
                out.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return Tensor(Shape{rows.size(), shape[1], shape[2], shape[3]}, std::move(out));
}

int argmax_row(std::span<const float> logits, std::size_t row) {
  return logits[row * kClasses + 1] > logits[row * kClasses] ? 1 : 0;
}

void check_dataset(const Dataset& d, const ModelConfig& cfg, const char* what) {
  if (d.size() == 0) fail(ErrorKind::Data, what, " split is empty");
  const auto& s = d.inputs.shape();
  if (s.size() != 4 || s[0] != d.size() || s[1] != cfg.channels || s[2] != 1 ||
      s[3] != cfg.samples) {
    fail(ErrorKind::Dimension, what, " inputs have shape ", shape_str(s), ", model expects [N,",
         cfg.channels, ",1,", cfg.samples, "]");
  }
}

}  // namespace

std::vector<int> predict(const ModelParams<float>& params, const Dataset& data) {
  check_dataset(data, params.config, "evaluation");
  ModelParams<float> view = params;
  std::vector<int> out;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    rows.resize(std::min(kEvalBatch, data.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto logits = model_forward(gather(data, rows), view, Mode::Eval);
    for (std::size_t i = 0; i < rows.size(); ++i) out.push_back(argmax_row(logits.data(), i));
  }
  return out;
}

EvalResult evaluate(const ModelParams<float>& params, const Dataset& data) {
  check_dataset(data, params.config, "evaluation");
  ModelParams<float> view = params;
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    rows.resize(std::min(kEvalBatch, data.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto logits = model_forward(gather(data, rows), view, Mode::Eval);
    const std::span<const int> labels(data.labels.data() + start, rows.size());
    loss += static_cast<double>(cross_entropy(logits, labels).item()) *
            static_cast<double>(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      correct += argmax_row(logits.data(), i) == labels[i] ? 1 : 0;
    }
  }
  const auto n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train(const Dataset& train_set, const Dataset& val_set, const Dataset& test_set,
                  const TrainConfig& config,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  config.validate();
  check_dataset(train_set, config.model, "training");
  check_dataset(val_set, config.model, "validation");
  check_dataset(test_set, config.model, "test");

  ModelParams<float> params =
      init_model<float>(config.model, config.ablation, derive_seed(config.seed, 1));
  std::vector<ParamSlot<float>> slots;
  params.for_each_param([&](const std::string&, Tensor& t, const ParamInfo& info) {
    if (block_active(info.block, config.ablation)) slots.push_back({t, info.decay});
  });
  OptimizerState state;
  const AdamWOptions adamw{config.lr, config.weight_decay};
  Rng shuffle(derive_seed(config.seed, 2));

  TrainReport report;
  report.ablation = config.ablation.name();
  report.param_count = count_params(params);
  EarlyStopping stopper(config.patience);
  ModelParams<float> best = params.clone();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    try {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle.below(i)]);
      }
      double loss_sum = 0.0;
      std::size_t correct = 0;
      std::vector<int> labels;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::span<const std::size_t> rows(
            order.data() + start, std::min(config.batch_size, order.size() - start));
        labels.clear();
        for (auto r : rows) labels.push_back(train_set.labels[r]);
        for (auto& s : slots) s.tensor.zero_grad();

        Tape<float> tape;
        Tape<float>::Scope scope(tape);
        const auto logits = model_forward(gather(train_set, rows), params, Mode::Train);
        const auto loss = cross_entropy(logits, labels);
        const double value = loss.item();
        if (!std::isfinite(value)) fail(ErrorKind::Numerical, "training loss is ", value);
        tape.backward(loss);
        optimizer_step<float>(slots, state, adamw);

        loss_sum += value * static_cast<double>(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          correct += argmax_row(logits.data(), i) == labels[i] ? 1 : 0;
        }
      }
      const auto n = static_cast<double>(train_set.size());
      const auto val = evaluate(params, val_set);
      if (!std::isfinite(val.loss)) fail(ErrorKind::Numerical, "validation loss is ", val.loss);

      EpochMetrics m{epoch, loss_sum / n, static_cast<double>(correct) / n, val.loss,
                     val.accuracy};
      report.epochs.push_back(m);
      if (on_epoch) on_epoch(m);
      const bool stop = stopper.update(val.loss);
      if (stopper.improved()) best = params.clone();
      if (stop) break;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Numerical) {
        fail(ErrorKind::Numerical, "diverged at epoch ", epoch, ": ", e.what());
      }
      throw;
    }
  }

  report.stopped_epoch = stopper.epochs();
  report.best_epoch = stopper.best_epoch();
  report.best_val_loss = stopper.best();
  const auto test = evaluate(best, test_set);
  report.test_loss = test.loss;
  report.test_accuracy = test.accuracy;
  return {std::move(report), std::move(best)};
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"train_acc", e.train_acc},
                           {"val_loss", e.val_loss},
                           {"val_acc", e.val_acc}});
  }
  return {{"subject", subject_id},
          {"ablation", ablation},
          {"stopped_epoch", stopped_epoch},
          {"best_epoch", best_epoch},
          {"best_val_loss", best_val_loss},
          {"test_loss", test_loss},
          {"test_accuracy", test_accuracy},
          {"param_count", param_count},
          {"epochs", epochs_json}};
}

std::string TrainReport::metrics_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,val_loss,val_acc\n" << std::setprecision(9);
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_loss << ','
       << e.val_acc << '\n';
  }
  return os.str();
}

}  // namespace mhanet
