// SPDX-License-Identifier: Apache-2.0
#include "madr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "madr/errors.hpp"

namespace madr {

namespace {

Mat sample_states(const GameProblem& problem, int count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = problem.state_dim();
  Mat xs(n, count);
  for (int j = 0; j < count; ++j) {
    for (int i = 0; i < n; ++i) {
      const Interval& b = problem.state_bounds[i];
      xs(i, j) = b.lo + unit(rng) * b.width();
    }
  }
  return xs;
}

MpcTerm subsample(const MpcTerm& full, int count, std::mt19937_64& rng) {
  const int M = static_cast<int>(full.targets.size());
  if (count <= 0 || count >= M) return full;
  std::uniform_int_distribution<int> pick(0, M - 1);
  MpcTerm out;
  out.states.resize(full.states.rows(), count);
  out.taus.resize(count);
  out.targets.resize(count);
  for (int i = 0; i < count; ++i) {
    const int k = pick(rng);
    out.states.col(i) = full.states.col(k);
    out.taus[i] = full.taus[k];
    out.targets[i] = full.targets[k];
  }
  return out;
}

json terms_json(const LossTerms& t) {
  return {{"pde", t.pde}, {"boundary", t.boundary}, {"mpc", t.mpc}, {"total", t.total}};
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path) {
    if (!path.empty()) {
      out_.open(path);
      if (!out_) throw IoError("cannot write " + path.string());
    }
  }
  void write(const json& record) {
    if (out_.is_open()) {
      out_ << record.dump() << '\n';
      out_.flush();
    }
  }

 private:
  std::ofstream out_;
};

}  // namespace

void TrainConfig::validate() const {
  if (total_epochs < 1) throw ConfigError("train: total_epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("train: warmup_fraction must lie in (0, 1)");
  }
  if (!(curriculum_fraction > 0.0 && curriculum_fraction <= 1.0)) {
    throw ConfigError("train: curriculum_fraction must lie in (0, 1]");
  }
  if (refresh_interval < 0) throw ConfigError("train: refresh_interval must be >= 0");
  if (pde_batch < 1 || boundary_batch < 1) throw ConfigError("train: batch sizes must be >= 1");
  if (mpc_batch < 0) throw ConfigError("train: mpc_batch must be >= 0");
  if (lambda_pde < 0 || lambda_boundary < 0 || lambda_ft < 0) {
    throw ConfigError("train: loss weights must be >= 0");
  }
  if (value_scale < 0) throw ConfigError("train: value_scale must be >= 0");
  if (checkpoint_interval < 0 || log_interval < 1) {
    throw ConfigError("train: checkpoint_interval >= 0 and log_interval >= 1 required");
  }
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 &&
        adam_epsilon > 0)) {
    throw ConfigError("train: invalid Adam constants");
  }
}

TrainConfig TrainConfig::from_json(const json& j) {
  check_keys(j,
             {"problem", "hidden_layers", "width", "omega0", "total_epochs", "learning_rate",
              "adam_beta1", "adam_beta2", "adam_epsilon", "curriculum_fraction",
              "warmup_fraction", "refresh_interval", "pde_batch", "boundary_batch", "mpc_batch",
              "lambda_pde", "lambda_boundary", "lambda_ft", "residual_norm", "mode", "vanilla",
              "sampler", "value_scale", "seed", "checkpoint_interval", "log_interval"},
             "train config");
  TrainConfig c;
  try {
    c.problem = j.value("problem", c.problem);
    c.arch.hidden_layers = j.value("hidden_layers", c.arch.hidden_layers);
    c.arch.width = j.value("width", c.arch.width);
    c.arch.omega0 = j.value("omega0", c.arch.omega0);
    c.total_epochs = j.value("total_epochs", c.total_epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.curriculum_fraction = j.value("curriculum_fraction", c.curriculum_fraction);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.refresh_interval = j.value("refresh_interval", c.refresh_interval);
    c.pde_batch = j.value("pde_batch", c.pde_batch);
    c.boundary_batch = j.value("boundary_batch", c.boundary_batch);
    c.mpc_batch = j.value("mpc_batch", c.mpc_batch);
    c.lambda_pde = j.value("lambda_pde", c.lambda_pde);
    c.lambda_boundary = j.value("lambda_boundary", c.lambda_boundary);
    c.lambda_ft = j.value("lambda_ft", c.lambda_ft);
    const std::string norm = j.value("residual_norm", std::string("l1"));
    if (norm == "l1") {
      c.residual_norm = ResidualNorm::kL1;
    } else if (norm == "l2") {
      c.residual_norm = ResidualNorm::kL2;
    } else {
      throw ConfigError("train: residual_norm must be l1 or l2");
    }
    c.mode = parse_game_mode(j.value("mode", std::string("avoid")));
    c.vanilla = j.value("vanilla", c.vanilla);
    if (j.contains("sampler")) c.sampler = SamplerConfig::from_json(j["sampler"]);
    c.value_scale = j.value("value_scale", c.value_scale);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
    c.log_interval = j.value("log_interval", c.log_interval);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

json TrainConfig::to_json() const {
  return {{"problem", problem},
          {"hidden_layers", arch.hidden_layers},
          {"width", arch.width},
          {"omega0", arch.omega0},
          {"total_epochs", total_epochs},
          {"learning_rate", learning_rate},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_epsilon", adam_epsilon},
          {"curriculum_fraction", curriculum_fraction},
          {"warmup_fraction", warmup_fraction},
          {"refresh_interval", refresh_interval},
          {"pde_batch", pde_batch},
          {"boundary_batch", boundary_batch},
          {"mpc_batch", mpc_batch},
          {"lambda_pde", lambda_pde},
          {"lambda_boundary", lambda_boundary},
          {"lambda_ft", lambda_ft},
          {"residual_norm", residual_norm == ResidualNorm::kL1 ? "l1" : "l2"},
          {"mode", game_mode_name(mode)},
          {"vanilla", vanilla},
          {"sampler", sampler.to_json()},
          {"value_scale", value_scale},
          {"seed", seed},
          {"checkpoint_interval", checkpoint_interval},
          {"log_interval", log_interval}};
}

std::string TrainConfig::digest() const {
  const std::string text = to_json().dump();
  return hex64(fnv1a(text.data(), text.size()));
}

int effective_refresh_interval(const TrainConfig& config) {
  if (config.refresh_interval > 0) return config.refresh_interval;
  return std::max(1, config.total_epochs / 10);
}

int warmup_epochs(const TrainConfig& config) {
  return static_cast<int>(std::lround(config.warmup_fraction * config.total_epochs));
}

double curriculum_tau(const TrainConfig& config, double horizon, int epoch) {
  const double span = config.curriculum_fraction * config.total_epochs;
  return horizon * std::min(1.0, static_cast<double>(epoch) / span);
}

bool is_refresh_epoch(const TrainConfig& config, int epoch) {
  if (config.vanilla || config.sampler.dataset_size == 0) return false;
  const int warm = warmup_epochs(config);
  return epoch >= warm && (epoch - warm) % effective_refresh_interval(config) == 0;
}

TrainResult train(const GameProblem& problem, const TrainConfig& config,
                  const std::filesystem::path& out_dir, const ProgressFn& progress) {
  config.validate();
  if (!config.vanilla) config.sampler.validate(problem);
  const auto started = std::chrono::steady_clock::now();
  const int n = problem.state_dim();
  const double T = problem.horizon;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  std::mt19937_64 rng(config.seed);
  NetworkArch arch = config.arch;
  arch.input_dim = n + 1;
  const InputNormalization norm = InputNormalization::for_problem(problem);

  double value_scale = config.value_scale;
  if (value_scale == 0.0) {
    const Mat probe = sample_states(problem, 10000, rng);
    for (Eigen::Index j = 0; j < probe.cols(); ++j) {
      value_scale = std::max(value_scale, std::abs(problem.boundary(Vec(probe.col(j)))));
    }
    if (!(value_scale > 0.0)) value_scale = 1.0;
  }
  ValueNetworkF net = ValueNetworkF::initialize(arch, norm, value_scale, config.seed,
                                                NetworkMeta{problem.name, config.mode, 0});

  LossBatch batch;
  batch.norm = config.residual_norm;
  batch.mode = config.mode;
  batch.weights = LossWeights{config.lambda_pde, config.lambda_boundary, config.lambda_ft};

  auto fill_batch = [&](double t_curr) {
    batch.pde_states = sample_states(problem, config.pde_batch, rng);
    batch.pde_taus.resize(config.pde_batch);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < config.pde_batch; ++i) batch.pde_taus[i] = unit(rng) * t_curr;
    batch.boundary_states = sample_states(problem, config.boundary_batch, rng);
  };

  double lambda_boundary = config.lambda_boundary;
  if (lambda_boundary == 0.0) {
    fill_batch(0.0);
    batch.weights = LossWeights{1.0, 1.0, 0.0};
    const LossTerms t0 = loss_and_param_gradient<float>(net, problem, batch, nullptr);
    lambda_boundary = (t0.boundary > 0.0 && t0.pde > 0.0) ? t0.pde / t0.boundary : 1.0;
    batch.weights = LossWeights{config.lambda_pde, lambda_boundary, config.lambda_ft};
  }

  const std::size_t P = net.params().size();
  ParamVector<float> grad(P), m(P, 0.0f), v(P, 0.0f);
  const float b1 = static_cast<float>(config.adam_beta1);
  const float b2 = static_cast<float>(config.adam_beta2);
  const float eps = static_cast<float>(config.adam_epsilon);

  std::optional<MpcDataset> datasets[2];
  MpcTerm full_terms[2];
  int dataset_epoch = -1;
  JsonlWriter metrics_out(out_dir.empty() ? std::filesystem::path() : out_dir / "metrics.jsonl");
  TrainResult result;
  LossTerms last;

  auto dump_failure = [&](int epoch, const std::string& what) {
    if (out_dir.empty()) return;
    save_checkpoint(net, out_dir / "failure.ckpt");
    json state = {{"epoch", epoch},
                  {"error", what},
                  {"t_curr", curriculum_tau(config, T, epoch)},
                  {"lambda_boundary", lambda_boundary},
                  {"last_terms", terms_json(last)}};
    write_text_file(out_dir / "failure.json", state.dump(2));
  };

  for (int epoch = 0; epoch < config.total_epochs; ++epoch) {
    const double t_curr = curriculum_tau(config, T, epoch);
    if (is_refresh_epoch(config, epoch)) {
      const NetworkField<float> field(net);
      const std::string source = checkpoint_id(net);
      for (int p = 0; p < 2; ++p) {
        const Perspective persp = p == 0 ? Perspective::kControl : Perspective::kDisturbance;
        const std::uint64_t seed =
            config.seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(epoch) * 2 + p + 1));
        datasets[p] = collect_dataset(problem, field, config.sampler, persp, 0.0, t_curr, seed,
                                      t_curr, source, config.mode);
        full_terms[p] = datasets[p]->to_term();
        if (!out_dir.empty()) {
          datasets[p]->save(out_dir / (std::string("mpc_") + perspective_name(persp) + ".bin"));
        }
      }
      dataset_epoch = epoch;
    }

    fill_batch(t_curr);
    batch.mpc.clear();
    if (dataset_epoch >= 0) {
      for (int p = 0; p < 2; ++p) batch.mpc.push_back(subsample(full_terms[p], config.mpc_batch, rng));
    }
    try {
      last = loss_and_param_gradient(net, problem, batch, &grad);
    } catch (const NumericalError& e) {
      dump_failure(epoch, e.what());
      throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
    }

    const int step = epoch + 1;
    const float lr = static_cast<float>(config.learning_rate);
    const float c1 = 1.0f - static_cast<float>(std::pow(config.adam_beta1, step));
    const float c2 = 1.0f - static_cast<float>(std::pow(config.adam_beta2, step));
    auto& theta = net.mutable_params();
    for (std::size_t i = 0; i < P; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0f - b2) * grad[i] * grad[i];
      theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
    net.mutable_meta().training_step = step;

    if (epoch % config.log_interval == 0 || step == config.total_epochs) {
      json record = {{"epoch", epoch},
                     {"t_curr", t_curr},
                     {"loss", terms_json(last)},
                     {"lambda_boundary", lambda_boundary},
                     {"clamped_inputs", net.clamp_count()}};
      if (dataset_epoch >= 0) {
        record["datasets"] = {{"control", datasets[0]->source_checkpoint},
                              {"disturbance", datasets[1]->source_checkpoint},
                              {"collected_at", dataset_epoch},
                              {"sizes", {datasets[0]->samples.size(), datasets[1]->samples.size()}}};
      }
      metrics_out.write(record);
      result.metrics.push_back(record);
      if (progress) progress(record);
    }
    if (config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0 &&
        !out_dir.empty()) {
      save_checkpoint(net, out_dir / ("step_" + std::to_string(step) + ".ckpt"));
    }
  }

  if (!out_dir.empty()) save_checkpoint(net, out_dir / "final.ckpt");
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  result.report = {{"problem", problem.name},
                   {"mode", game_mode_name(config.mode)},
                   {"vanilla", config.vanilla},
                   {"epochs", config.total_epochs},
                   {"config_digest", config.digest()},
                   {"checkpoint", checkpoint_id(net)},
                   {"value_scale", value_scale},
                   {"lambda_boundary", lambda_boundary},
                   {"final_loss", terms_json(last)},
                   {"clamped_inputs", net.clamp_count()},
                   {"wall_seconds", seconds}};
  if (!out_dir.empty()) write_text_file(out_dir / "report.json", result.report.dump(2));
  result.network = net.cast<double>();
  return result;
}

json EvalReport::to_json() const {
  return {{"iou", iou},           {"vol_ref", vol_ref},   {"vol_cand", vol_cand},
          {"max_gap", max_gap},   {"mean_gap", mean_gap}, {"window_nodes", window_nodes}};
}

EvalReport evaluate_checkpoint(const ValueField& field, const ValueGrid& grid,
                               const Window& window, double level) {
  if (field.problem_name() != grid.problem_name()) {
    throw ContractError("evaluate_checkpoint: field is for '" + field.problem_name() +
                        "' but the grid is for '" + grid.problem_name() + "'");
  }
  require(field.state_dim() == grid.spec().dims(), "evaluate_checkpoint: dimension mismatch");
  const auto nodes = window_nodes(grid, window);
  const double tau = grid.horizon();
  std::vector<double> cand(nodes.size());
  constexpr std::size_t kChunk = 4096;
  Mat xs;
  Vec vals;
  for (std::size_t start = 0; start < nodes.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, nodes.size() - start);
    xs.resize(field.state_dim(), static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) xs.col(i) = grid.node_state(nodes[start + i]);
    field.values(xs, Vec::Constant(count, tau), vals);
    for (std::size_t i = 0; i < count; ++i) cand[start + i] = vals[i];
  }
  const FieldComparison cmp = compare_fields(grid, cand, level, window);
  EvalReport r;
  r.iou = cmp.iou;
  r.vol_ref = cmp.vol_ref;
  r.vol_cand = cmp.vol_cand;
  r.window_nodes = cmp.window_nodes;
  const auto ref = grid.initial_slice();
  double sum = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double gap = std::abs(cand[i] - ref[nodes[i]]);
    r.max_gap = std::max(r.max_gap, gap);
    sum += gap;
  }
  if (!nodes.empty()) r.mean_gap = sum / nodes.size();
  return r;
}

Window parse_window(const json& j) {
  Window w;
  if (j.is_null()) return w;
  if (!j.is_array()) throw ConfigError("window: expected an array of [lo, hi] pairs or null");
  for (const auto& b : j) {
    if (b.is_null()) {
      w.bounds.push_back(Interval{-std::numeric_limits<double>::infinity(),
                                  std::numeric_limits<double>::infinity()});
    } else if (b.is_array() && b.size() == 2) {
      w.bounds.push_back(Interval{b[0].get<double>(), b[1].get<double>()});
    } else {
      throw ConfigError("window: each entry must be [lo, hi] or null");
    }
  }
  return w;
}

}  // namespace madr
