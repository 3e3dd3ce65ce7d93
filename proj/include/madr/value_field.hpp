// SPDX-License-Identifier: Apache-2.0
#pragma once

// A single query interface over the two value representations: a solved
// grid and a trained network. Policies, the sampler, and the arena only see
// ValueField.

#include <memory>
#include <string>

#include "madr/grid_solver.hpp"
#include "madr/value_net.hpp"

namespace madr {

struct FieldSample {
  double value = 0.0;
  double dvalue_dtau = 0.0;
  Vec grad_x;
};

class ValueField {
 public:
  virtual ~ValueField() = default;
  virtual int state_dim() const = 0;
  virtual double horizon() const = 0;
  virtual const std::string& problem_name() const = 0;
  virtual GameMode mode() const = 0;
  // `tau` is time-to-go. Out-of-box queries are clamped and counted.
  virtual double value(const Vec& x, double tau) const = 0;
  virtual FieldSample sample(const Vec& x, double tau) const = 0;
  // Batched: xs is n x B.
  virtual void values(const Mat& xs, const Vec& taus, Vec& out) const;
  virtual void gradients(const Mat& xs, const Vec& taus, Mat& grad_x) const;
  virtual std::uint64_t clamp_count() const = 0;
};

using FieldPtr = std::shared_ptr<const ValueField>;

template <typename T>
class NetworkField final : public ValueField {
 public:
  explicit NetworkField(BasicValueNetwork<T> net) : net_(std::move(net)) {}

  int state_dim() const override { return net_.state_dim(); }
  double horizon() const override { return net_.horizon(); }
  const std::string& problem_name() const override { return net_.meta().problem_name; }
  GameMode mode() const override { return net_.meta().mode; }
  double value(const Vec& x, double tau) const override { return net_.value(x, tau); }
  FieldSample sample(const Vec& x, double tau) const override;
  void values(const Mat& xs, const Vec& taus, Vec& out) const override {
    net_.values(xs, taus, out);
  }
  void gradients(const Mat& xs, const Vec& taus, Mat& grad_x) const override {
    Vec v;
    net_.values_and_gradients(xs, taus, v, grad_x);
  }
  std::uint64_t clamp_count() const override { return net_.clamp_count(); }
  const BasicValueNetwork<T>& network() const { return net_; }

 private:
  BasicValueNetwork<T> net_;
};

// Grid-backed field. Gradients are central differences with one grid
// spacing per axis (one-sided at non-periodic edges); dV/dtau uses the
// stored slice interval.
class GridField final : public ValueField {
 public:
  explicit GridField(std::shared_ptr<const ValueGrid> grid);

  int state_dim() const override { return grid_->spec().dims(); }
  double horizon() const override { return grid_->horizon(); }
  const std::string& problem_name() const override { return grid_->problem_name(); }
  GameMode mode() const override { return grid_->mode(); }
  double value(const Vec& x, double tau) const override;
  FieldSample sample(const Vec& x, double tau) const override;
  std::uint64_t clamp_count() const override { return clamps_.get(); }
  const ValueGrid& grid() const { return *grid_; }

 private:
  // Clamps into the box (non-periodic axes) and tau into [0, T].
  Vec clamp_state(const Vec& x, double& tau) const;

  std::shared_ptr<const ValueGrid> grid_;
  ClampCounter clamps_;
};

// Loads a grid (.grid) or a network checkpoint (anything else) by sniffing
// the file magic.
FieldPtr load_field(const std::filesystem::path& path);

}  // namespace madr
