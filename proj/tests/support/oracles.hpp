// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent reference computations shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <random>

#include "madr/game_models.hpp"
#include "madr/value_field.hpp"
#include "madr/value_net.hpp"

namespace madr::testing {

// All 2^m corners of a box, first corner all-lower.
inline std::vector<Vec> box_vertices(const InputBox& box) {
  const int m = box.dim();
  std::vector<Vec> out;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    Vec v(m);
    for (int j = 0; j < m; ++j) v[j] = (mask >> j) & 1u ? box.upper()[j] : box.lower()[j];
    out.push_back(v);
  }
  return out;
}

struct EnumeratedHamiltonian {
  double value = 0.0;
  Vec u_star;
  Vec d_star;
};

// Brute force over box corners: max over u of p.g u, min over d of p.w d.
inline EnumeratedHamiltonian enumerate_hamiltonian(const FlowTerms& t, const InputBox& control,
                                                   const InputBox& disturbance, const Vec& p) {
  const Vec cu = t.g.transpose() * p;
  const Vec cd = t.w.transpose() * p;
  EnumeratedHamiltonian out;
  double best_u = -INFINITY, best_d = INFINITY;
  for (const Vec& u : box_vertices(control)) {
    const double v = cu.dot(u);
    if (v > best_u) best_u = v, out.u_star = u;
  }
  for (const Vec& d : box_vertices(disturbance)) {
    const double v = cd.dot(d);
    if (v < best_d) best_d = v, out.d_star = d;
  }
  out.value = p.dot(t.f) + cu.dot(out.u_star) + cd.dot(out.d_star);
  return out;
}

inline double relative_error(const Vec& a, const Vec& b, double floor = 1e-8) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

// Random double-precision network for `problem`.
inline ValueNetwork random_network(const GameProblem& problem, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> layers(1, 3), width(2, 12);
  std::uniform_real_distribution<double> omega(1.0, 30.0), scale(0.2, 3.0);
  NetworkArch arch;
  arch.input_dim = problem.state_dim() + 1;
  arch.hidden_layers = layers(rng);
  arch.width = width(rng);
  arch.omega0 = omega(rng);
  return ValueNetwork::initialize(arch, InputNormalization::for_problem(problem), scale(rng), rng());
}

inline Vec uniform_state(const GameProblem& problem, std::mt19937_64& rng, double shrink = 1.0) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec x(problem.state_dim());
  for (int i = 0; i < problem.state_dim(); ++i) {
    const auto& b = problem.state_bounds[i];
    const double c = 0.5 * (b.lo + b.hi), h = 0.5 * b.width() * shrink;
    x[i] = c - h + 2.0 * h * unit(rng);
  }
  return x;
}

// Relative error of the analytic input gradient (state and tau) against
// central differences, worst over `points` random inputs.
inline double input_gradient_error(const ValueNetwork& net, const GameProblem& problem,
                                   std::mt19937_64& rng, int points, double h = 1e-6) {
  std::uniform_real_distribution<double> tau(0.05, 0.95);
  const int n = problem.state_dim();
  Mat xs(n, points);
  Vec taus(points);
  for (int j = 0; j < points; ++j) {
    xs.col(j) = uniform_state(problem, rng, 0.9);
    taus[j] = tau(rng) * problem.horizon;
  }
  Vec values, dvdtau;
  Mat grads;
  net.values_and_gradients(xs, taus, values, grads, &dvdtau);
  double worst = 0.0;
  for (int j = 0; j < points; ++j) {
    Vec analytic(n + 1), fd(n + 1);
    analytic << grads.col(j), dvdtau[j];
    for (int i = 0; i <= n; ++i) {
      Vec xp = xs.col(j), xm = xs.col(j);
      double tp = taus[j], tm = taus[j];
      if (i < n) {
        xp[i] += h;
        xm[i] -= h;
      } else {
        tp += h;
        tm -= h;
      }
      fd[i] = (net.value(xp, tp) - net.value(xm, tm)) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(analytic, fd));
  }
  return worst;
}

// A small loss batch with every term active.
inline LossBatch random_batch(const GameProblem& problem, std::mt19937_64& rng, ResidualNorm norm) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LossBatch b;
  const int n = problem.state_dim();
  const int P = 6, B = 4, M = 3;
  b.pde_states.resize(n, P);
  b.pde_taus.resize(P);
  for (int j = 0; j < P; ++j) {
    b.pde_states.col(j) = uniform_state(problem, rng, 0.9);
    b.pde_taus[j] = (0.05 + 0.9 * unit(rng)) * problem.horizon;
  }
  b.boundary_states.resize(n, B);
  for (int j = 0; j < B; ++j) b.boundary_states.col(j) = uniform_state(problem, rng, 0.9);
  for (int k = 0; k < 2; ++k) {
    MpcTerm t;
    t.states.resize(n, M);
    t.taus.resize(M);
    t.targets.resize(M);
    for (int j = 0; j < M; ++j) {
      t.states.col(j) = uniform_state(problem, rng, 0.9);
      t.taus[j] = (0.05 + 0.9 * unit(rng)) * problem.horizon;
      t.targets[j] = unit(rng) - 0.5;
    }
    b.mpc.push_back(t);
  }
  b.weights = LossWeights{1.0, 0.7, 3.0};
  b.norm = norm;
  return b;
}

// Relative error of the analytic parameter gradient of the loss against
// central differences over every parameter.
inline double param_gradient_error(const ValueNetwork& net, const GameProblem& problem,
                                   const LossBatch& batch, double h = 1e-6) {
  ParamVector<double> grad;
  loss_and_param_gradient<double>(net, problem, batch, &grad);
  ValueNetwork probe = net;
  const std::size_t P = net.params().size();
  Vec analytic(static_cast<Eigen::Index>(P)), fd(static_cast<Eigen::Index>(P));
  for (std::size_t i = 0; i < P; ++i) {
    const double orig = probe.params()[i];
    probe.mutable_params()[i] = orig + h;
    const double lp = loss_and_param_gradient<double>(probe, problem, batch, nullptr).total;
    probe.mutable_params()[i] = orig - h;
    const double lm = loss_and_param_gradient<double>(probe, problem, batch, nullptr).total;
    probe.mutable_params()[i] = orig;
    analytic[static_cast<Eigen::Index>(i)] = grad[i];
    fd[static_cast<Eigen::Index>(i)] = (lp - lm) / (2.0 * h);
  }
  return relative_error(analytic, fd);
}

}  // namespace madr::testing

namespace madr::testing {

// V(x, tau) = |x| - 0.2 for integrator1d at every time-to-go.
class IntegratorField final : public ValueField {
 public:
  explicit IntegratorField(double offset = 0.0) : offset_(offset) {}
  int state_dim() const override { return 1; }
  double horizon() const override { return 1.0; }
  const std::string& problem_name() const override { return name_; }
  GameMode mode() const override { return GameMode::kAvoid; }
  double value(const Vec& x, double) const override { return std::abs(x[0]) - 0.2 + offset_; }
  FieldSample sample(const Vec& x, double tau) const override {
    FieldSample s;
    s.value = value(x, tau);
    s.grad_x = Vec::Constant(1, x[0] > 0 ? 1.0 : (x[0] < 0 ? -1.0 : 0.0));
    return s;
  }
  std::uint64_t clamp_count() const override { return 0; }

 private:
  std::string name_ = "integrator1d";
  double offset_;
};

// Returns NaN everywhere.
class NanField final : public ValueField {
 public:
  int state_dim() const override { return 1; }
  double horizon() const override { return 1.0; }
  const std::string& problem_name() const override { return name_; }
  GameMode mode() const override { return GameMode::kAvoid; }
  double value(const Vec&, double) const override { return std::nan(""); }
  FieldSample sample(const Vec&, double) const override {
    return FieldSample{std::nan(""), std::nan(""), Vec::Constant(1, std::nan(""))};
  }
  std::uint64_t clamp_count() const override { return 0; }

 private:
  std::string name_ = "integrator1d";
};

}  // namespace madr::testing
