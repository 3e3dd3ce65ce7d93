// SPDX-License-Identifier: Apache-2.0
#include "madr/value_field.hpp"

#include <algorithm>
#include <fstream>

#include "madr/errors.hpp"

namespace madr {

void ValueField::values(const Mat& xs, const Vec& taus, Vec& out) const {
  require(xs.cols() == taus.size(), "values: one tau per state required");
  out.resize(xs.cols());
  for (Eigen::Index i = 0; i < xs.cols(); ++i) out[i] = value(xs.col(i), taus[i]);
}

void ValueField::gradients(const Mat& xs, const Vec& taus, Mat& grad_x) const {
  require(xs.cols() == taus.size(), "gradients: one tau per state required");
  grad_x.resize(xs.rows(), xs.cols());
  for (Eigen::Index i = 0; i < xs.cols(); ++i) grad_x.col(i) = sample(xs.col(i), taus[i]).grad_x;
}

template <typename T>
FieldSample NetworkField<T>::sample(const Vec& x, double tau) const {
  NetSample s = net_.eval_with_gradient(x, tau);
  return FieldSample{s.value, s.dvalue_dtau, std::move(s.grad_x)};
}

template class NetworkField<double>;
template class NetworkField<float>;

GridField::GridField(std::shared_ptr<const ValueGrid> grid) : grid_(std::move(grid)) {
  require(grid_ != nullptr, "GridField: null grid");
}

Vec GridField::clamp_state(const Vec& x, double& tau) const {
  const auto& axes = grid_->spec().axes;
  require(x.size() == static_cast<Eigen::Index>(axes.size()), "GridField: dimension mismatch");
  Vec y = x;
  bool hit = false;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i].periodic) continue;
    const double c = std::clamp(y[i], axes[i].min, axes[i].max);
    hit |= c != y[i];
    y[i] = c;
  }
  const double t = std::clamp(tau, 0.0, horizon());
  hit |= t != tau;
  tau = t;
  if (hit) clamps_.add(1);
  return y;
}

double GridField::value(const Vec& x, double tau) const {
  Vec y = clamp_state(x, tau);
  return interpolate(*grid_, y, horizon() - tau);
}

FieldSample GridField::sample(const Vec& x, double tau) const {
  Vec y = clamp_state(x, tau);
  const double t = horizon() - tau;
  FieldSample s;
  s.value = interpolate(*grid_, y, t);
  const auto& axes = grid_->spec().axes;
  s.grad_x.resize(y.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const double h = axes[i].spacing();
    Vec lo = y, hi = y;
    hi[i] += h;
    lo[i] -= h;
    if (!axes[i].periodic) {
      hi[i] = std::min(hi[i], axes[i].max);
      lo[i] = std::max(lo[i], axes[i].min);
    }
    s.grad_x[i] = (interpolate(*grid_, hi, t) - interpolate(*grid_, lo, t)) / (hi[i] - lo[i]);
  }
  const double dt = grid_->spec().dt;
  const double t_hi = std::min(t + dt, horizon());
  const double t_lo = std::max(t - dt, 0.0);
  // Larger t means smaller time-to-go.
  s.dvalue_dtau = -(interpolate(*grid_, y, t_hi) - interpolate(*grid_, y, t_lo)) / (t_hi - t_lo);
  return s;
}

FieldPtr load_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof magic);
  const std::string m(magic, sizeof magic);
  if (m == "MADRGRD1") {
    return std::make_shared<GridField>(std::make_shared<const ValueGrid>(ValueGrid::load(path)));
  }
  if (m == "MADRNET1") {
    return std::make_shared<NetworkField<double>>(load_checkpoint(path));
  }
  throw IoError(path.string() + ": neither a value grid nor a network checkpoint");
}

}  // namespace madr
