// SPDX-License-Identifier: Apache-2.0
#pragma once

// Sinusoidal multilayer value approximator V(x, tau) over state and
// time-to-go, with forward-mode input partials, the HJI-VI residual, and
// exact parameter gradients of the combined training loss.
//
// Layers:  h_1 = sin(w0 (W_1 s + b_1)),  h_l = sin(w0 (W_l h_{l-1} + b_l)),
//          V = value_scale * (W_o h_L + b_o)
// where s is the input normalized into [-1, 1]^{n+1}.

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "madr/game_models.hpp"
#include "madr/grid_solver.hpp"

namespace madr {

struct NetworkArch {
  int input_dim = 0;  // state_dim + 1
  int hidden_layers = 3;
  int width = 512;
  double omega0 = 30.0;

  std::size_t parameter_count() const;
  void validate() const;
};

// Affine map of the (x, tau) box onto [-1, 1]^{n+1}.
struct InputNormalization {
  Vec lower;
  Vec upper;

  static InputNormalization for_problem(const GameProblem& problem);
  int dim() const { return static_cast<int>(lower.size()); }
  Vec scale() const { return 2.0 * (upper - lower).cwiseInverse(); }
  Vec apply(const Vec& z) const;
  Vec invert(const Vec& s) const;
  bool contains(const Vec& z) const;
};

// Counts inputs that had to be clamped into the normalization box. Copies
// carry the current count.
class ClampCounter {
 public:
  ClampCounter() = default;
  ClampCounter(const ClampCounter& o) : count_(o.get()) {}
  ClampCounter& operator=(const ClampCounter& o) {
    count_.store(o.get());
    return *this;
  }
  void add(std::uint64_t n) const { count_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t get() const { return count_.load(std::memory_order_relaxed); }

 private:
  mutable std::atomic<std::uint64_t> count_{0};
};

// Forward-pass intermediates. Columns are grouped as [primal | tangent_0 | ...
// | tangent_{q-1}], each group `batch` wide; tangent k is the directional
// derivative along input coordinate k.
template <typename T>
struct ForwardCache {
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  int batch = 0;
  int tangents = 0;
  Matrix s;                   // normalized inputs, (n+1) x batch
  std::vector<Matrix> z;      // pre-activations per hidden layer
  std::vector<Matrix> h;      // activations per hidden layer
  std::vector<Matrix> cosines;  // w0 cos(w0 z_primal) per hidden layer
  Matrix y;                   // raw output (before value_scale), 1 x batch(1+q)
  // Backward scratch, kept with the cache so repeated batches of one shape
  // reuse their buffers.
  mutable Matrix bwd_g, bwd_zbar, bwd_acc;
};

// Parameter storage aligned for the widest SIMD loads, so kernels take the
// same code path (and summation order) on every run.
template <typename T>
using ParamVector = std::vector<T, Eigen::aligned_allocator<T>>;

struct NetworkMeta {
  std::string problem_name;
  GameMode mode = GameMode::kAvoid;
  std::uint64_t training_step = 0;
};

struct NetSample {
  double value = 0.0;
  double dvalue_dtau = 0.0;
  Vec grad_x;
};

template <typename T>
class BasicValueNetwork {
 public:
  using Scalar = T;
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  BasicValueNetwork() = default;
  BasicValueNetwork(NetworkArch arch, InputNormalization norm, double value_scale,
                    ParamVector<T> params, NetworkMeta meta = {});

  // Sinusoidal initialization: first layer U(-1/fan_in, 1/fan_in), later
  // layers U(-sqrt(6/fan_in)/w0, sqrt(6/fan_in)/w0), biases U(-1/sqrt(fan_in),
  // 1/sqrt(fan_in)).
  static BasicValueNetwork initialize(const NetworkArch& arch, const InputNormalization& norm,
                                      double value_scale, std::uint64_t seed,
                                      NetworkMeta meta = {});

  template <typename U>
  BasicValueNetwork<U> cast() const {
    ParamVector<U> p(params_.begin(), params_.end());
    return BasicValueNetwork<U>(arch_, norm_, value_scale_, std::move(p), meta_);
  }

  const NetworkArch& arch() const { return arch_; }
  const InputNormalization& normalization() const { return norm_; }
  double value_scale() const { return value_scale_; }
  const NetworkMeta& meta() const { return meta_; }
  NetworkMeta& mutable_meta() { return meta_; }
  int state_dim() const { return arch_.input_dim - 1; }
  double horizon() const { return norm_.upper[arch_.input_dim - 1]; }
  const ParamVector<T>& params() const { return params_; }
  ParamVector<T>& mutable_params() { return params_; }
  std::uint64_t clamp_count() const { return clamps_.get(); }

  // Clamps each column of `inputs` ((n+1) x B) into the normalization box and
  // returns how many columns changed.
  std::size_t clamp_inputs(Matrix& inputs) const;

  // Forward pass on raw inputs (x, tau) already inside the box. Tangents
  // cover every input, or only the state inputs when `state_tangents_only`.
  void forward(const Matrix& inputs, bool with_tangents, ForwardCache<T>& cache,
               bool state_tangents_only = false) const;

  // Accumulates d(loss)/d(theta) into `grad` given the adjoint of the raw
  // output columns (same layout as cache.y).
  void backward(const ForwardCache<T>& cache, const Matrix& output_adjoint,
                std::span<T> grad) const;

  // Convenience single-point queries (inputs clamped, clamp counter bumped).
  double value(const Vec& x, double tau) const;
  NetSample eval_with_gradient(const Vec& x, double tau) const;

  // Batched queries: xs is n x B, taus has B entries.
  void values(const Mat& xs, const Vec& taus, Vec& out) const;
  void values_and_gradients(const Mat& xs, const Vec& taus, Vec& values, Mat& grad_x,
                            Vec* dvalue_dtau = nullptr) const;

 private:
  struct Layer {
    std::size_t w_offset;
    std::size_t b_offset;
    int rows;
    int cols;
  };
  void build_layout();
  Eigen::Map<const Matrix> weight(int l) const;
  Eigen::Map<const Vector> bias(int l) const;
  Matrix pack_inputs(const Mat& xs, const Vec& taus) const;

  NetworkArch arch_;
  InputNormalization norm_;
  double value_scale_ = 1.0;
  ParamVector<T> params_;
  NetworkMeta meta_;
  std::vector<Layer> layers_;  // hidden layers followed by the output layer
  ClampCounter clamps_;
};

using ValueNetwork = BasicValueNetwork<double>;
using ValueNetworkF = BasicValueNetwork<float>;

// Checkpoint layout (little-endian):
//   char[8] "MADRNET1", u32 version (1)
//   str problem name, u8 mode (0 avoid, 1 follow), u64 training step
//   u32 input_dim, u32 hidden_layers, u32 width, f64 omega0, f64 value_scale
//   f64 lower[input_dim], f64 upper[input_dim]
//   u64 parameter count, f32 parameters[]
template <typename T>
void save_checkpoint(const BasicValueNetwork<T>& net, const std::filesystem::path& path);
ValueNetwork load_checkpoint(const std::filesystem::path& path);
// Hex digest of the float32 parameter payload plus the training step.
template <typename T>
std::string checkpoint_id(const BasicValueNetwork<T>& net);

// --- Hamiltonian ----------------------------------------------------------

// argmax_{u in box} coef . u, per channel; zero coefficients pick the center.
Vec bang_bang_max(const InputBox& box, const Vec& coef);
// argmin_{d in box} coef . d, per channel; zero coefficients pick the center.
Vec bang_bang_min(const InputBox& box, const Vec& coef);

struct HamiltonianResult {
  double value = 0.0;   // p.f + max_u p.g u + min_d p.w d
  Vec u_star;
  Vec d_star;
  Vec dH_dp;            // f + g u* + w d*
};

HamiltonianResult hamiltonian_from_gradient(const FlowTerms& terms, const InputBox& control,
                                            const InputBox& disturbance, const Vec& p);

// H at (x, tau) using the network's spatial gradient.
template <typename T>
HamiltonianResult hamiltonian(const BasicValueNetwork<T>& net, const GameProblem& problem,
                              const Vec& x, double tau);

// min{ -dV/dtau + H, l - V } (kAvoid) or max{...} (kFollow).
double vi_residual_from_parts(double value, double dvalue_dtau, double ham, double ell,
                              GameMode mode);
template <typename T>
double vi_residual(const BasicValueNetwork<T>& net, const GameProblem& problem, const Vec& x,
                   double tau, GameMode mode = GameMode::kAvoid);

// --- loss -------------------------------------------------------------------

enum class ResidualNorm { kL1, kL2 };

struct LossWeights {
  double pde = 1.0;
  double boundary = 1.0;
  double ft = 100.0;
};

// One supervised set of (x, tau, target) triples; each set contributes
// lambda_ft * mean |target - V|.
struct MpcTerm {
  Mat states;  // n x M
  Vec taus;
  Vec targets;
};

struct LossBatch {
  Mat pde_states;  // n x P
  Vec pde_taus;
  Mat boundary_states;  // n x B, evaluated at tau = 0
  std::vector<MpcTerm> mpc;
  LossWeights weights;
  ResidualNorm norm = ResidualNorm::kL1;
  GameMode mode = GameMode::kAvoid;
};

// Weighted contributions; total is their sum.
struct LossTerms {
  double pde = 0.0;
  double boundary = 0.0;
  double mpc = 0.0;
  double total = 0.0;
};

// Evaluates the loss and, when `grad` is non-null, writes d(loss)/d(theta)
// (overwriting). Throws NumericalError naming the first non-finite term.
template <typename T>
LossTerms loss_and_param_gradient(const BasicValueNetwork<T>& net, const GameProblem& problem,
                                  const LossBatch& batch, ParamVector<T>* grad);

}  // namespace madr
