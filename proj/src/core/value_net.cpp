// SPDX-License-Identifier: Apache-2.0
#include "madr/value_net.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "madr/errors.hpp"
#include "madr/io_util.hpp"

namespace madr {

namespace {
constexpr char kNetMagic[8] = {'M', 'A', 'D', 'R', 'N', 'E', 'T', '1'};
constexpr std::uint32_t kNetVersion = 1;

double sign(double v) { return (v > 0.0) - (v < 0.0); }
}  // namespace

std::size_t NetworkArch::parameter_count() const {
  std::size_t count = 0;
  int fan_in = input_dim;
  for (int l = 0; l < hidden_layers; ++l) {
    count += static_cast<std::size_t>(width) * fan_in + width;
    fan_in = width;
  }
  return count + fan_in + 1;
}

void NetworkArch::validate() const {
  if (input_dim < 2) throw ConfigError("network: input_dim must be state_dim + 1 >= 2");
  if (hidden_layers < 1) throw ConfigError("network: need at least one hidden layer");
  if (width < 1) throw ConfigError("network: width must be positive");
  if (!(omega0 > 0.0)) throw ConfigError("network: omega0 must be positive");
}

InputNormalization InputNormalization::for_problem(const GameProblem& problem) {
  const int n = problem.state_dim();
  InputNormalization norm;
  norm.lower.resize(n + 1);
  norm.upper.resize(n + 1);
  for (int i = 0; i < n; ++i) {
    norm.lower[i] = problem.state_bounds[i].lo;
    norm.upper[i] = problem.state_bounds[i].hi;
  }
  norm.lower[n] = 0.0;
  norm.upper[n] = problem.horizon;
  return norm;
}

Vec InputNormalization::apply(const Vec& z) const {
  return (scale().array() * (z - lower).array() - 1.0).matrix();
}

Vec InputNormalization::invert(const Vec& s) const {
  return lower + ((s.array() + 1.0) / scale().array()).matrix();
}

bool InputNormalization::contains(const Vec& z) const {
  return ((z.array() >= lower.array()) && (z.array() <= upper.array())).all();
}

// --- network ----------------------------------------------------------------

template <typename T>
BasicValueNetwork<T>::BasicValueNetwork(NetworkArch arch, InputNormalization norm,
                                        double value_scale, ParamVector<T> params,
                                        NetworkMeta meta)
    : arch_(arch),
      norm_(std::move(norm)),
      value_scale_(value_scale),
      params_(std::move(params)),
      meta_(std::move(meta)) {
  arch_.validate();
  require(norm_.dim() == arch_.input_dim, "network: normalization dimension mismatch");
  require(params_.size() == arch_.parameter_count(),
          "network: expected " + std::to_string(arch_.parameter_count()) + " parameters, got " +
              std::to_string(params_.size()));
  build_layout();
}

template <typename T>
void BasicValueNetwork<T>::build_layout() {
  layers_.clear();
  std::size_t offset = 0;
  int fan_in = arch_.input_dim;
  for (int l = 0; l <= arch_.hidden_layers; ++l) {
    const int rows = l < arch_.hidden_layers ? arch_.width : 1;
    Layer layer{offset, offset + static_cast<std::size_t>(rows) * fan_in, rows, fan_in};
    offset = layer.b_offset + rows;
    layers_.push_back(layer);
    fan_in = rows;
  }
}

template <typename T>
BasicValueNetwork<T> BasicValueNetwork<T>::initialize(const NetworkArch& arch,
                                                      const InputNormalization& norm,
                                                      double value_scale, std::uint64_t seed,
                                                      NetworkMeta meta) {
  arch.validate();
  std::mt19937_64 rng(seed);
  ParamVector<T> params;
  params.reserve(arch.parameter_count());
  auto fill = [&](std::size_t count, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < count; ++i) params.push_back(static_cast<T>(dist(rng)));
  };
  int fan_in = arch.input_dim;
  for (int l = 0; l <= arch.hidden_layers; ++l) {
    const int rows = l < arch.hidden_layers ? arch.width : 1;
    const double wb = l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / arch.omega0;
    fill(static_cast<std::size_t>(rows) * fan_in, wb);
    fill(rows, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    fan_in = rows;
  }
  return BasicValueNetwork(arch, norm, value_scale, std::move(params), std::move(meta));
}

template <typename T>
Eigen::Map<const typename BasicValueNetwork<T>::Matrix> BasicValueNetwork<T>::weight(int l) const {
  const Layer& L = layers_[l];
  return Eigen::Map<const Matrix>(params_.data() + L.w_offset, L.rows, L.cols);
}

template <typename T>
Eigen::Map<const typename BasicValueNetwork<T>::Vector> BasicValueNetwork<T>::bias(int l) const {
  const Layer& L = layers_[l];
  return Eigen::Map<const Vector>(params_.data() + L.b_offset, L.rows);
}

template <typename T>
std::size_t BasicValueNetwork<T>::clamp_inputs(Matrix& inputs) const {
  std::size_t changed = 0;
  for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
    bool hit = false;
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
      const T lo = static_cast<T>(norm_.lower[r]);
      const T hi = static_cast<T>(norm_.upper[r]);
      T& v = inputs(r, c);
      if (v < lo) {
        v = lo;
        hit = true;
      } else if (v > hi) {
        v = hi;
        hit = true;
      }
    }
    changed += hit;
  }
  if (changed > 0) clamps_.add(changed);
  return changed;
}

template <typename T>
void BasicValueNetwork<T>::forward(const Matrix& inputs, bool with_tangents,
                                   ForwardCache<T>& cache, bool state_tangents_only) const {
  const int n1 = arch_.input_dim;
  require(inputs.rows() == n1, "network forward: input rows mismatch");
  const int B = static_cast<int>(inputs.cols());
  const int q = with_tangents ? (state_tangents_only ? n1 - 1 : n1) : 0;
  const int cols = B * (1 + q);
  const int L = arch_.hidden_layers;
  const T w0 = static_cast<T>(arch_.omega0);
  const Vector scale = norm_.scale().template cast<T>();
  const Vector lower = norm_.lower.template cast<T>();

  cache.batch = B;
  cache.tangents = q;
  cache.s = ((inputs.colwise() - lower).array().colwise() * scale.array() - T(1)).matrix();
  cache.z.resize(L);
  cache.h.resize(L);
  cache.cosines.resize(L);

  for (int l = 0; l < L; ++l) {
    auto W = weight(l);
    auto b = bias(l);
    Matrix& z = cache.z[l];
    z.resize(arch_.width, cols);
    if (l == 0) {
      z.leftCols(B).noalias() = W * cache.s;
      for (int k = 0; k < q; ++k) {
        z.middleCols(B * (1 + k), B) = (W.col(k) * scale[k]).replicate(1, B);
      }
    } else {
      z.noalias() = W * cache.h[l - 1];
    }
    z.leftCols(B).colwise() += b;
    Matrix& h = cache.h[l];
    h.resize(arch_.width, cols);
    h.leftCols(B) = (w0 * z.leftCols(B).array()).sin().matrix();
    cache.cosines[l] = (w0 * (w0 * z.leftCols(B).array()).cos()).matrix();
    for (int k = 0; k < q; ++k) {
      h.middleCols(B * (1 + k), B) =
          (cache.cosines[l].array() * z.middleCols(B * (1 + k), B).array()).matrix();
    }
  }
  cache.y.noalias() = weight(L) * cache.h[L - 1];
  cache.y.leftCols(B).array() += bias(L)[0];
}

template <typename T>
void BasicValueNetwork<T>::backward(const ForwardCache<T>& cache, const Matrix& adj,
                                    std::span<T> grad) const {
  require(grad.size() == params_.size(), "network backward: gradient size mismatch");
  const int B = cache.batch;
  const int q = cache.tangents;
  const int cols = B * (1 + q);
  require(adj.rows() == 1 && adj.cols() == cols, "network backward: adjoint shape mismatch");
  const int L = arch_.hidden_layers;
  const T w0 = static_cast<T>(arch_.omega0);
  const Vector scale = norm_.scale().template cast<T>();

  auto grad_w = [&](int l) {
    const Layer& ly = layers_[l];
    return Eigen::Map<Matrix>(grad.data() + ly.w_offset, ly.rows, ly.cols);
  };
  auto grad_b = [&](int l) {
    const Layer& ly = layers_[l];
    return Eigen::Map<Vector>(grad.data() + ly.b_offset, ly.rows);
  };

  grad_w(L).noalias() += adj * cache.h[L - 1].transpose();
  grad_b(L)[0] += adj.leftCols(B).sum();
  Matrix& G = cache.bwd_g;
  Matrix& zbar = cache.bwd_zbar;
  Matrix& acc = cache.bwd_acc;
  G.noalias() = weight(L).transpose() * adj;
  zbar.resize(arch_.width, cols);

  for (int l = L - 1; l >= 0; --l) {
    const auto C = cache.cosines[l].array();
    zbar.leftCols(B) = (G.leftCols(B).array() * C).matrix();
    if (q > 0) {
      acc.setZero(arch_.width, B);
      for (int k = 0; k < q; ++k) {
        acc.array() += G.middleCols(B * (1 + k), B).array() *
                       cache.z[l].middleCols(B * (1 + k), B).array();
        zbar.middleCols(B * (1 + k), B) = (G.middleCols(B * (1 + k), B).array() * C).matrix();
      }
      zbar.leftCols(B).array() -= w0 * w0 * cache.h[l].leftCols(B).array() * acc.array();
    }
    grad_b(l) += zbar.leftCols(B).rowwise().sum();
    if (l > 0) {
      grad_w(l).noalias() += zbar * cache.h[l - 1].transpose();
      G.noalias() = weight(l).transpose() * zbar;
    } else {
      auto gw = grad_w(0);
      gw.noalias() += zbar.leftCols(B) * cache.s.transpose();
      for (int k = 0; k < q; ++k) {
        gw.col(k) += scale[k] * zbar.middleCols(B * (1 + k), B).rowwise().sum();
      }
    }
  }
}

template <typename T>
typename BasicValueNetwork<T>::Matrix BasicValueNetwork<T>::pack_inputs(const Mat& xs,
                                                                        const Vec& taus) const {
  const int n = state_dim();
  require(xs.rows() == n, "network: state dimension mismatch");
  require(xs.cols() == taus.size(), "network: one tau per state required");
  Matrix in(n + 1, xs.cols());
  in.topRows(n) = xs.cast<T>();
  in.row(n) = taus.transpose().cast<T>();
  clamp_inputs(in);
  return in;
}

template <typename T>
void BasicValueNetwork<T>::values(const Mat& xs, const Vec& taus, Vec& out) const {
  thread_local ForwardCache<T> cache;
  forward(pack_inputs(xs, taus), false, cache);
  out = (value_scale_ * cache.y.row(0).transpose().template cast<double>()).eval();
}

template <typename T>
void BasicValueNetwork<T>::values_and_gradients(const Mat& xs, const Vec& taus, Vec& values,
                                                Mat& grad_x, Vec* dvalue_dtau) const {
  thread_local ForwardCache<T> state_only, full;
  ForwardCache<T>& cache = dvalue_dtau == nullptr ? state_only : full;
  forward(pack_inputs(xs, taus), true, cache, dvalue_dtau == nullptr);
  const int n = state_dim();
  const int B = static_cast<int>(xs.cols());
  values.resize(B);
  grad_x.resize(n, B);
  for (int i = 0; i < B; ++i) {
    values[i] = value_scale_ * static_cast<double>(cache.y(0, i));
    for (int k = 0; k < n; ++k) {
      grad_x(k, i) = value_scale_ * static_cast<double>(cache.y(0, B * (1 + k) + i));
    }
  }
  if (dvalue_dtau != nullptr) {
    dvalue_dtau->resize(B);
    for (int i = 0; i < B; ++i) {
      (*dvalue_dtau)[i] = value_scale_ * static_cast<double>(cache.y(0, B * (1 + n) + i));
    }
  }
}

template <typename T>
double BasicValueNetwork<T>::value(const Vec& x, double tau) const {
  Vec out;
  values(x, Vec::Constant(1, tau), out);
  return out[0];
}

template <typename T>
NetSample BasicValueNetwork<T>::eval_with_gradient(const Vec& x, double tau) const {
  Vec v, dtau;
  Mat g;
  values_and_gradients(x, Vec::Constant(1, tau), v, g, &dtau);
  return NetSample{v[0], dtau[0], g.col(0)};
}

template class BasicValueNetwork<double>;
template class BasicValueNetwork<float>;

// --- checkpoints --------------------------------------------------------------

template <typename T>
void save_checkpoint(const BasicValueNetwork<T>& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  BinaryWriter w(out);
  const auto& a = net.arch();
  w.bytes(kNetMagic, sizeof kNetMagic);
  w.u32(kNetVersion);
  w.str(net.meta().problem_name);
  w.u8(net.meta().mode == GameMode::kAvoid ? 0 : 1);
  w.u64(net.meta().training_step);
  w.u32(static_cast<std::uint32_t>(a.input_dim));
  w.u32(static_cast<std::uint32_t>(a.hidden_layers));
  w.u32(static_cast<std::uint32_t>(a.width));
  w.f64(a.omega0);
  w.f64(net.value_scale());
  for (int i = 0; i < a.input_dim; ++i) w.f64(net.normalization().lower[i]);
  for (int i = 0; i < a.input_dim; ++i) w.f64(net.normalization().upper[i]);
  w.u64(net.params().size());
  for (T p : net.params()) w.f32(static_cast<float>(p));
}

ValueNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  BinaryReader r(in, path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kNetMagic)) {
    throw IoError(path.string() + ": not a network checkpoint");
  }
  if (r.u32() != kNetVersion) throw IoError(path.string() + ": unsupported checkpoint version");
  NetworkMeta meta;
  meta.problem_name = r.str();
  meta.mode = r.u8() == 0 ? GameMode::kAvoid : GameMode::kFollow;
  meta.training_step = r.u64();
  NetworkArch arch;
  arch.input_dim = static_cast<int>(r.u32());
  arch.hidden_layers = static_cast<int>(r.u32());
  arch.width = static_cast<int>(r.u32());
  arch.omega0 = r.f64();
  const double value_scale = r.f64();
  if (arch.input_dim < 2 || arch.input_dim > 64 || arch.hidden_layers < 1 ||
      arch.hidden_layers > 64 || arch.width < 1 || arch.width > 1 << 16) {
    throw IoError(path.string() + ": implausible architecture header");
  }
  InputNormalization norm;
  norm.lower.resize(arch.input_dim);
  norm.upper.resize(arch.input_dim);
  for (int i = 0; i < arch.input_dim; ++i) norm.lower[i] = r.f64();
  for (int i = 0; i < arch.input_dim; ++i) norm.upper[i] = r.f64();
  const std::uint64_t count = r.u64();
  if (count != arch.parameter_count()) throw IoError(path.string() + ": parameter count mismatch");
  ParamVector<double> params(count);
  for (auto& p : params) p = r.f32();
  return ValueNetwork(arch, std::move(norm), value_scale, std::move(params), std::move(meta));
}

template <typename T>
std::string checkpoint_id(const BasicValueNetwork<T>& net) {
  std::vector<float> payload(net.params().begin(), net.params().end());
  std::uint64_t h = fnv1a(payload.data(), payload.size() * sizeof(float));
  const std::uint64_t step = net.meta().training_step;
  h = fnv1a(&step, sizeof step, h);
  return hex64(h);
}

template void save_checkpoint(const BasicValueNetwork<double>&, const std::filesystem::path&);
template void save_checkpoint(const BasicValueNetwork<float>&, const std::filesystem::path&);
template std::string checkpoint_id(const BasicValueNetwork<double>&);
template std::string checkpoint_id(const BasicValueNetwork<float>&);

// --- Hamiltonian ------------------------------------------------------------------

Vec bang_bang_max(const InputBox& box, const Vec& coef) {
  require(coef.size() == box.dim(), "bang_bang_max: dimension mismatch");
  Vec u(box.dim());
  for (int j = 0; j < box.dim(); ++j) {
    u[j] = coef[j] > 0.0   ? box.upper()[j]
           : coef[j] < 0.0 ? box.lower()[j]
                           : 0.5 * (box.lower()[j] + box.upper()[j]);
  }
  return u;
}

Vec bang_bang_min(const InputBox& box, const Vec& coef) {
  require(coef.size() == box.dim(), "bang_bang_min: dimension mismatch");
  Vec d(box.dim());
  for (int j = 0; j < box.dim(); ++j) {
    d[j] = coef[j] > 0.0   ? box.lower()[j]
           : coef[j] < 0.0 ? box.upper()[j]
                           : 0.5 * (box.lower()[j] + box.upper()[j]);
  }
  return d;
}

HamiltonianResult hamiltonian_from_gradient(const FlowTerms& terms, const InputBox& control,
                                            const InputBox& disturbance, const Vec& p) {
  require(p.size() == terms.f.size(), "hamiltonian: gradient dimension mismatch");
  HamiltonianResult out;
  const Vec cu = terms.g.transpose() * p;
  const Vec cd = terms.w.transpose() * p;
  out.u_star = bang_bang_max(control, cu);
  out.d_star = bang_bang_min(disturbance, cd);
  out.value = p.dot(terms.f) + cu.dot(out.u_star) + cd.dot(out.d_star);
  out.dH_dp = terms.f + terms.g * out.u_star + terms.w * out.d_star;
  return out;
}

template <typename T>
HamiltonianResult hamiltonian(const BasicValueNetwork<T>& net, const GameProblem& problem,
                              const Vec& x, double tau) {
  NetSample s = net.eval_with_gradient(x, tau);
  FlowTerms terms = flow_terms(*problem.dynamics, x);
  return hamiltonian_from_gradient(terms, problem.dynamics->control_box(),
                                   problem.dynamics->disturbance_box(), s.grad_x);
}

double vi_residual_from_parts(double value, double dvalue_dtau, double ham, double ell,
                              GameMode mode) {
  const double pde = -dvalue_dtau + ham;
  const double bnd = ell - value;
  return mode == GameMode::kAvoid ? std::min(pde, bnd) : std::max(pde, bnd);
}

template <typename T>
double vi_residual(const BasicValueNetwork<T>& net, const GameProblem& problem, const Vec& x,
                   double tau, GameMode mode) {
  NetSample s = net.eval_with_gradient(x, tau);
  FlowTerms terms = flow_terms(*problem.dynamics, x);
  HamiltonianResult h = hamiltonian_from_gradient(terms, problem.dynamics->control_box(),
                                                  problem.dynamics->disturbance_box(), s.grad_x);
  return vi_residual_from_parts(s.value, s.dvalue_dtau, h.value, problem.boundary(x), mode);
}

template HamiltonianResult hamiltonian(const BasicValueNetwork<double>&, const GameProblem&,
                                       const Vec&, double);
template HamiltonianResult hamiltonian(const BasicValueNetwork<float>&, const GameProblem&,
                                       const Vec&, double);
template double vi_residual(const BasicValueNetwork<double>&, const GameProblem&, const Vec&,
                            double, GameMode);
template double vi_residual(const BasicValueNetwork<float>&, const GameProblem&, const Vec&,
                            double, GameMode);

// --- loss -----------------------------------------------------------------------

template <typename T>
LossTerms loss_and_param_gradient(const BasicValueNetwork<T>& net, const GameProblem& problem,
                                  const LossBatch& batch, ParamVector<T>* grad) {
  using Matrix = typename BasicValueNetwork<T>::Matrix;
  const int n = net.state_dim();
  require(n == problem.state_dim(), "loss: network/problem dimension mismatch");
  const bool l1 = batch.norm == ResidualNorm::kL1;
  const double vs = net.value_scale();
  const auto& model = *problem.dynamics;
  const auto& w = batch.weights;

  if (grad != nullptr) grad->assign(net.params().size(), T(0));
  std::span<T> gspan = grad != nullptr ? std::span<T>(*grad) : std::span<T>();

  auto pack = [&](const Mat& xs, const Vec& taus) {
    require(xs.rows() == n && xs.cols() == taus.size(), "loss: batch shape mismatch");
    Matrix in(n + 1, xs.cols());
    in.topRows(n) = xs.template cast<T>();
    in.row(n) = taus.transpose().template cast<T>();
    net.clamp_inputs(in);
    return in;
  };

  LossTerms terms;
  // One cache per term: each keeps its own shape, so no buffer is
  // reallocated between steps.
  thread_local ForwardCache<T> pde_cache, boundary_cache, mpc_cache;

  const int P = static_cast<int>(batch.pde_states.cols());
  if (P > 0) {
    ForwardCache<T>& cache = pde_cache;
    net.forward(pack(batch.pde_states, batch.pde_taus), true, cache);
    Matrix adj = Matrix::Zero(1, static_cast<Eigen::Index>(P) * (n + 2));
    FlowTerms ft;
    Vec p(n);
    double sum = 0.0;
    for (int i = 0; i < P; ++i) {
      const double* xi = batch.pde_states.col(i).data();
      const double V = vs * static_cast<double>(cache.y(0, i));
      const double Vtau = vs * static_cast<double>(cache.y(0, P * (1 + n) + i));
      for (int k = 0; k < n; ++k) p[k] = vs * static_cast<double>(cache.y(0, P * (1 + k) + i));
      model.eval_terms(std::span<const double>(xi, n), ft);
      HamiltonianResult h = hamiltonian_from_gradient(ft, model.control_box(),
                                                      model.disturbance_box(), p);
      const double ell = problem.boundary(std::span<const double>(xi, n));
      const double pde = -Vtau + h.value;
      const double bnd = ell - V;
      const bool pick_pde = batch.mode == GameMode::kAvoid ? pde <= bnd : pde >= bnd;
      const double r = pick_pde ? pde : bnd;
      sum += l1 ? std::abs(r) : r * r;
      const double dr = (l1 ? sign(r) : 2.0 * r) * w.pde / P;
      if (pick_pde) {
        adj(0, P * (1 + n) + i) = static_cast<T>(-dr * vs);
        for (int k = 0; k < n; ++k) adj(0, P * (1 + k) + i) = static_cast<T>(dr * h.dH_dp[k] * vs);
      } else {
        adj(0, i) = static_cast<T>(-dr * vs);
      }
    }
    terms.pde = w.pde * sum / P;
    if (!std::isfinite(terms.pde)) throw NumericalError("loss: non-finite pde term");
    if (grad != nullptr) net.backward(cache, adj, gspan);
  }

  const int Bn = static_cast<int>(batch.boundary_states.cols());
  if (Bn > 0) {
    ForwardCache<T>& cache = boundary_cache;
    net.forward(pack(batch.boundary_states, Vec::Zero(Bn)), false, cache);
    Matrix adj(1, Bn);
    double sum = 0.0;
    for (int i = 0; i < Bn; ++i) {
      const double V = vs * static_cast<double>(cache.y(0, i));
      const double diff =
          V - problem.boundary(std::span<const double>(batch.boundary_states.col(i).data(), n));
      sum += l1 ? std::abs(diff) : diff * diff;
      adj(0, i) = static_cast<T>((l1 ? sign(diff) : 2.0 * diff) * w.boundary / Bn * vs);
    }
    terms.boundary = w.boundary * sum / Bn;
    if (!std::isfinite(terms.boundary)) throw NumericalError("loss: non-finite boundary term");
    if (grad != nullptr) net.backward(cache, adj, gspan);
  }

  for (const MpcTerm& m : batch.mpc) {
    const int M = static_cast<int>(m.states.cols());
    if (M == 0) continue;
    require(m.targets.size() == M, "loss: mpc targets size mismatch");
    ForwardCache<T>& cache = mpc_cache;
    net.forward(pack(m.states, m.taus), false, cache);
    Matrix adj(1, M);
    double sum = 0.0;
    for (int i = 0; i < M; ++i) {
      const double diff = m.targets[i] - vs * static_cast<double>(cache.y(0, i));
      sum += std::abs(diff);
      adj(0, i) = static_cast<T>(-sign(diff) * w.ft / M * vs);
    }
    terms.mpc += w.ft * sum / M;
    if (grad != nullptr && w.ft != 0.0) net.backward(cache, adj, gspan);
  }
  if (!std::isfinite(terms.mpc)) throw NumericalError("loss: non-finite mpc term");

  terms.total = terms.pde + terms.boundary + terms.mpc;
  return terms;
}

template LossTerms loss_and_param_gradient(const BasicValueNetwork<double>&, const GameProblem&,
                                           const LossBatch&, ParamVector<double>*);
template LossTerms loss_and_param_gradient(const BasicValueNetwork<float>&, const GameProblem&,
                                           const LossBatch&, ParamVector<float>*);

}  // namespace madr
