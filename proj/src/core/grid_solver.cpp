// SPDX-License-Identifier: Apache-2.0
#include "madr/grid_solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "madr/errors.hpp"
#include "madr/io_util.hpp"

namespace madr {

namespace {
constexpr int kMaxGridDims = 4;
constexpr char kGridMagic[8] = {'M', 'A', 'D', 'R', 'G', 'R', 'D', '1'};
constexpr std::uint32_t kGridVersion = 1;
constexpr double kDissipationSafety = 1.1;
}  // namespace

const char* game_mode_name(GameMode mode) {
  return mode == GameMode::kAvoid ? "avoid" : "follow";
}

GameMode parse_game_mode(const std::string& name) {
  if (name == "avoid") return GameMode::kAvoid;
  if (name == "follow") return GameMode::kFollow;
  throw ConfigError("unknown game mode '" + name + "' (expected avoid|follow)");
}

double GridAxis::spacing() const {
  return periodic ? (max - min) / count : (max - min) / (count - 1);
}

double GridAxis::node(int j) const {
  return periodic ? min + (j + 1) * spacing() : min + j * spacing();
}

std::size_t GridSpec::node_count() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= static_cast<std::size_t>(a.count);
  return n;
}

std::vector<std::size_t> GridSpec::strides() const {
  std::vector<std::size_t> s(axes.size(), 1);
  for (int i = dims() - 2; i >= 0; --i) s[i] = s[i + 1] * axes[i + 1].count;
  return s;
}

void GridSpec::validate() const {
  if (axes.empty() || dims() > kMaxGridDims) {
    throw ConfigError("grid: 1 to 4 axes supported, got " + std::to_string(dims()));
  }
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const auto& a = axes[i];
    if (a.count < 3) throw ConfigError("grid axis " + std::to_string(i) + ": need >= 3 points");
    if (!(a.max > a.min)) throw ConfigError("grid axis " + std::to_string(i) + ": empty range");
    if (a.periodic && std::abs((a.max - a.min) - 2.0 * kPi) > 1e-9) {
      throw ConfigError("grid axis " + std::to_string(i) + ": periodic axes must span 2*pi");
    }
  }
  if (!(dt > 0.0)) throw ConfigError("grid: dt must be positive");
  if (substeps < 0) throw ConfigError("grid: substeps must be >= 0");
  if (!(cfl_safety > 0.0 && cfl_safety <= 1.0)) {
    throw ConfigError("grid: cfl_safety must lie in (0, 1]");
  }
}

GridSpec GridSpec::for_problem(const GameProblem& problem, const std::vector<int>& counts,
                               double dt) {
  if (static_cast<int>(counts.size()) != problem.state_dim()) {
    throw ConfigError("grid: " + std::to_string(counts.size()) + " axes given for a " +
                      std::to_string(problem.state_dim()) + "-D problem");
  }
  GridSpec spec;
  spec.dt = dt;
  for (int i = 0; i < problem.state_dim(); ++i) {
    GridAxis a;
    a.count = counts[i];
    a.periodic = problem.dynamics->is_angular(i);
    if (a.periodic) {
      a.min = -kPi;
      a.max = kPi;
    } else {
      a.min = problem.state_bounds[i].lo;
      a.max = problem.state_bounds[i].hi;
    }
    spec.axes.push_back(a);
  }
  return spec;
}

GridSpec GridSpec::from_json(const nlohmann::json& j) {
  check_keys(j, {"axes", "dt", "substeps", "cfl_safety"}, "grid spec");
  GridSpec spec;
  try {
    for (const auto& a : j.at("axes")) {
      check_keys(a, {"min", "max", "count", "periodic"}, "grid axis");
      GridAxis axis;
      axis.periodic = a.value("periodic", false);
      axis.min = a.value("min", axis.periodic ? -kPi : 0.0);
      axis.max = a.value("max", axis.periodic ? kPi : 0.0);
      axis.count = a.at("count").get<int>();
      spec.axes.push_back(axis);
    }
    spec.dt = j.value("dt", spec.dt);
    spec.substeps = j.value("substeps", 0);
    spec.cfl_safety = j.value("cfl_safety", 0.5);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("grid spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

nlohmann::json GridSpec::to_json() const {
  json axes_json = json::array();
  for (const auto& a : axes) {
    axes_json.push_back({{"min", a.min}, {"max", a.max}, {"count", a.count}, {"periodic", a.periodic}});
  }
  return json{{"axes", axes_json}, {"dt", dt}, {"substeps", substeps}, {"cfl_safety", cfl_safety}};
}

GridSpec parse_grid_spec(const std::string& text, const GameProblem& problem) {
  bool shorthand = !text.empty() && std::all_of(text.begin(), text.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == 'x';
  });
  if (shorthand) {
    std::vector<int> counts;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, 'x')) {
      if (part.empty()) throw ConfigError("grid shorthand: empty axis in '" + text + "'");
      counts.push_back(std::stoi(part));
    }
    GridSpec spec = GridSpec::for_problem(problem, counts, 0.1);
    spec.validate();
    return spec;
  }
  return GridSpec::from_json(read_json_file(resolve_config_path(text)));
}

// --- ValueGrid ----------------------------------------------------------------

ValueGrid::ValueGrid(GridSpec spec, std::vector<double> times, std::string problem_name,
                     GameMode mode)
    : spec_(std::move(spec)),
      times_(std::move(times)),
      problem_name_(std::move(problem_name)),
      mode_(mode),
      values_(spec_.node_count() * times_.size(), 0.0) {}

std::span<double> ValueGrid::slice(std::size_t k) {
  require(k < times_.size(), "ValueGrid: time index out of range");
  const std::size_t n = num_nodes();
  return {values_.data() + k * n, n};
}

std::span<const double> ValueGrid::slice(std::size_t k) const {
  require(k < times_.size(), "ValueGrid: time index out of range");
  const std::size_t n = num_nodes();
  return {values_.data() + k * n, n};
}

Vec ValueGrid::node_state(std::size_t node) const {
  const auto strides = spec_.strides();
  Vec x(spec_.dims());
  for (int i = 0; i < spec_.dims(); ++i) {
    int j = static_cast<int>((node / strides[i]) % spec_.axes[i].count);
    x[i] = spec_.axes[i].node(j);
  }
  return x;
}

void ValueGrid::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  BinaryWriter w(out);
  w.bytes(kGridMagic, sizeof kGridMagic);
  w.u32(kGridVersion);
  w.str(problem_name_);
  w.u8(mode_ == GameMode::kAvoid ? 0 : 1);
  w.u32(static_cast<std::uint32_t>(spec_.dims()));
  for (const auto& a : spec_.axes) {
    w.f64(a.min);
    w.f64(a.max);
    w.u32(static_cast<std::uint32_t>(a.count));
    w.u8(a.periodic ? 1 : 0);
  }
  w.f64(spec_.dt);
  w.u32(static_cast<std::uint32_t>(spec_.substeps));
  w.f64(spec_.cfl_safety);
  w.u32(static_cast<std::uint32_t>(times_.size()));
  for (double t : times_) w.f64(t);
  for (double v : values_) w.f32(static_cast<float>(v));
}

ValueGrid ValueGrid::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  BinaryReader r(in, path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kGridMagic)) throw IoError(path.string() + ": not a value grid");
  if (r.u32() != kGridVersion) throw IoError(path.string() + ": unsupported grid version");
  std::string name = r.str();
  GameMode mode = r.u8() == 0 ? GameMode::kAvoid : GameMode::kFollow;
  GridSpec spec;
  std::uint32_t dims = r.u32();
  if (dims == 0 || dims > kMaxGridDims) throw IoError(path.string() + ": bad dimension count");
  for (std::uint32_t i = 0; i < dims; ++i) {
    GridAxis a;
    a.min = r.f64();
    a.max = r.f64();
    a.count = static_cast<int>(r.u32());
    a.periodic = r.u8() != 0;
    spec.axes.push_back(a);
  }
  spec.dt = r.f64();
  spec.substeps = static_cast<int>(r.u32());
  spec.cfl_safety = r.f64();
  std::uint32_t nt = r.u32();
  std::vector<double> times(nt);
  for (auto& t : times) t = r.f64();
  ValueGrid grid(spec, std::move(times), std::move(name), mode);
  for (auto& v : grid.values_) v = r.f32();
  return grid;
}

// --- solver --------------------------------------------------------------------

namespace {

// f, g, w at every node, laid out node-major.
struct FlowTable {
  int n = 0, mu = 0, md = 0;
  std::vector<double> f, g, w;
};

FlowTable build_flow_table(const GameProblem& problem, const ValueGrid& grid) {
  const auto& model = *problem.dynamics;
  FlowTable t;
  t.n = model.state_dim();
  t.mu = model.control_box().dim();
  t.md = model.disturbance_box().dim();
  const std::size_t nodes = grid.num_nodes();
  t.f.resize(nodes * t.n);
  t.g.resize(nodes * t.n * t.mu);
  t.w.resize(nodes * t.n * t.md);
  FlowTerms terms;
  for (std::size_t k = 0; k < nodes; ++k) {
    Vec x = grid.node_state(k);
    model.eval_terms(std::span<const double>(x.data(), x.size()), terms);
    for (int i = 0; i < t.n; ++i) {
      t.f[k * t.n + i] = terms.f[i];
      for (int j = 0; j < t.mu; ++j) t.g[(k * t.n + i) * t.mu + j] = terms.g(i, j);
      for (int j = 0; j < t.md; ++j) t.w[(k * t.n + i) * t.md + j] = terms.w(i, j);
    }
  }
  return t;
}

Vec alpha_from_table(const GameProblem& problem, const FlowTable& t, std::size_t nodes) {
  const auto& cb = problem.dynamics->control_box();
  const auto& db = problem.dynamics->disturbance_box();
  Vec umax = cb.lower().cwiseAbs().cwiseMax(cb.upper().cwiseAbs());
  Vec dmax = db.lower().cwiseAbs().cwiseMax(db.upper().cwiseAbs());
  Vec alpha = Vec::Zero(t.n);
  for (std::size_t k = 0; k < nodes; ++k) {
    for (int i = 0; i < t.n; ++i) {
      double a = std::abs(t.f[k * t.n + i]);
      for (int j = 0; j < t.mu; ++j) a += std::abs(t.g[(k * t.n + i) * t.mu + j]) * umax[j];
      for (int j = 0; j < t.md; ++j) a += std::abs(t.w[(k * t.n + i) * t.md + j]) * dmax[j];
      alpha[i] = std::max(alpha[i], a);
    }
  }
  return kDissipationSafety * alpha;
}

void check_problem_grid(const GameProblem& problem, const GridSpec& spec) {
  spec.validate();
  if (spec.dims() != problem.state_dim()) {
    throw ConfigError("grid has " + std::to_string(spec.dims()) + " axes but problem '" +
                      problem.name + "' is " + std::to_string(problem.state_dim()) + "-D");
  }
  for (int i = 0; i < spec.dims(); ++i) {
    if (spec.axes[i].periodic != problem.dynamics->is_angular(i)) {
      throw ConfigError("grid axis " + std::to_string(i) +
                        " periodicity does not match the problem's angular dims");
    }
  }
}

}  // namespace

Vec dissipation_coefficients(const GameProblem& problem, const GridSpec& spec) {
  check_problem_grid(problem, spec);
  ValueGrid shape(spec, {0.0}, problem.name, GameMode::kAvoid);
  FlowTable table = build_flow_table(problem, shape);
  return alpha_from_table(problem, table, shape.num_nodes());
}

ValueGrid solve_hji_vi(const GameProblem& problem, const GridSpec& spec, GameMode mode,
                       SolveStats* stats) {
  check_problem_grid(problem, spec);
  const double T = problem.horizon;
  const double ratio = T / spec.dt;
  const long slices = std::lround(ratio);
  if (slices < 1 || std::abs(ratio - slices) > 1e-9 * std::max(1.0, ratio)) {
    throw ConfigError("grid: horizon " + std::to_string(T) +
                      " is not an integer multiple of dt " + std::to_string(spec.dt));
  }
  std::vector<double> times(slices + 1);
  for (long k = 0; k <= slices; ++k) times[k] = T - k * spec.dt;
  times.back() = 0.0;

  ValueGrid grid(spec, times, problem.name, mode);
  const std::size_t N = grid.num_nodes();
  const int D = spec.dims();
  FlowTable table = build_flow_table(problem, grid);
  Vec alpha = alpha_from_table(problem, table, N);

  std::array<double, kMaxGridDims> inv_dx{};
  double cfl_rate = 0.0;
  for (int i = 0; i < D; ++i) {
    inv_dx[i] = 1.0 / spec.axes[i].spacing();
    cfl_rate += alpha[i] * inv_dx[i];
  }
  int substeps = spec.substeps;
  if (substeps == 0) {
    substeps = std::max(1, static_cast<int>(std::ceil(spec.dt * cfl_rate / spec.cfl_safety - 1e-12)));
  }
  const double h = spec.dt / substeps;
  if (h * cfl_rate > spec.cfl_safety * (1.0 + 1e-12)) {
    throw ConfigError("grid: CFL violated (dt/substeps * sum(alpha/dx) = " +
                      std::to_string(h * cfl_rate) + " > " + std::to_string(spec.cfl_safety) + ")");
  }
  if (stats != nullptr) {
    stats->alpha = alpha;
    stats->substeps = substeps;
    stats->substep_dt = h;
    stats->cfl_number = h * cfl_rate;
  }

  // Terminal condition.
  std::vector<double> ell(N);
  for (std::size_t k = 0; k < N; ++k) ell[k] = problem.boundary(grid.node_state(k));
  std::copy(ell.begin(), ell.end(), grid.slice(0).begin());

  const auto& cb = problem.dynamics->control_box();
  const auto& db = problem.dynamics->disturbance_box();
  const Vec uc = cb.center(), uh = cb.half_width();
  const Vec dc = db.center(), dh = db.half_width();
  const int n = table.n, mu = table.mu, md = table.md;
  const auto strides = spec.strides();
  std::array<int, kMaxGridDims> counts{};
  std::array<bool, kMaxGridDims> periodic{};
  for (int i = 0; i < D; ++i) {
    counts[i] = spec.axes[i].count;
    periodic[i] = spec.axes[i].periodic;
  }

  std::vector<double> cur(ell), next(N);
  for (long k = 1; k <= slices; ++k) {
    for (int s = 0; s < substeps; ++s) {
      std::array<int, kMaxGridDims> mi{};
      bool finite = true;
      for (std::size_t idx = 0; idx < N; ++idx) {
        const double v = cur[idx];
        double p[kMaxGridDims];
        double diss = 0.0;
        for (int i = 0; i < D; ++i) {
          const std::size_t st = strides[i];
          const int j = mi[i];
          const int c = counts[i];
          double pm, pp;
          if (periodic[i]) {
            const double vm = cur[j == 0 ? idx + (c - 1) * st : idx - st];
            const double vp = cur[j == c - 1 ? idx - (c - 1) * st : idx + st];
            pm = (v - vm) * inv_dx[i];
            pp = (vp - v) * inv_dx[i];
          } else if (j == 0) {
            pp = (cur[idx + st] - v) * inv_dx[i];
            pm = pp;
          } else if (j == c - 1) {
            pm = (v - cur[idx - st]) * inv_dx[i];
            pp = pm;
          } else {
            pm = (v - cur[idx - st]) * inv_dx[i];
            pp = (cur[idx + st] - v) * inv_dx[i];
          }
          p[i] = 0.5 * (pp + pm);
          diss += alpha[i] * 0.5 * (pp - pm);
        }
        const double* f = &table.f[idx * n];
        const double* g = &table.g[idx * n * mu];
        const double* w = &table.w[idx * n * md];
        double ham = 0.0;
        for (int i = 0; i < n; ++i) ham += p[i] * f[i];
        for (int j = 0; j < mu; ++j) {
          double c = 0.0;
          for (int i = 0; i < n; ++i) c += p[i] * g[i * mu + j];
          ham += std::abs(c) * uh[j] + c * uc[j];
        }
        for (int j = 0; j < md; ++j) {
          double c = 0.0;
          for (int i = 0; i < n; ++i) c += p[i] * w[i * md + j];
          ham += -std::abs(c) * dh[j] + c * dc[j];
        }
        double nv = v + h * (ham + diss);
        nv = mode == GameMode::kAvoid ? std::min(nv, ell[idx]) : std::max(nv, ell[idx]);
        finite = finite && std::isfinite(nv);
        next[idx] = nv;

        for (int i = D - 1; i >= 0; --i) {
          if (++mi[i] < counts[i]) break;
          mi[i] = 0;
        }
      }
      if (!finite) {
        throw NumericalError("grid solver: non-finite value in slice " + std::to_string(k) +
                             " (t = " + std::to_string(times[k]) + ")");
      }
      cur.swap(next);
    }
    std::copy(cur.begin(), cur.end(), grid.slice(static_cast<std::size_t>(k)).begin());
  }
  return grid;
}

double interpolate(const ValueGrid& grid, const Vec& x, double t) {
  const GridSpec& spec = grid.spec();
  const int D = spec.dims();
  require(x.size() == D, "interpolate: state dimension mismatch");
  const auto& times = grid.times();
  const double T = times.front();
  if (!(t >= -1e-12 && t <= T + 1e-12)) {
    throw DomainError("interpolate: time " + std::to_string(t) + " outside [0, " +
                      std::to_string(T) + "]");
  }

  std::array<int, kMaxGridDims> lo{}, hi{};
  std::array<double, kMaxGridDims> frac{};
  for (int i = 0; i < D; ++i) {
    const auto& a = spec.axes[i];
    const double dx = a.spacing();
    if (a.periodic) {
      double u = (wrap_angle(x[i]) - a.min) / dx - 1.0;
      u = std::fmod(u, static_cast<double>(a.count));
      if (u < 0) u += a.count;
      int j = static_cast<int>(std::floor(u));
      if (j >= a.count) j = a.count - 1;
      frac[i] = u - j;
      lo[i] = j;
      hi[i] = (j + 1) % a.count;
    } else {
      const double tol = 1e-9 * dx;
      if (x[i] < a.min - tol || x[i] > a.max + tol) {
        throw DomainError("interpolate: coordinate " + std::to_string(i) + " = " +
                          std::to_string(x[i]) + " outside [" + std::to_string(a.min) + ", " +
                          std::to_string(a.max) + "]");
      }
      double u = std::clamp((x[i] - a.min) / dx, 0.0, static_cast<double>(a.count - 1));
      int j = std::min(static_cast<int>(std::floor(u)), a.count - 2);
      frac[i] = u - j;
      lo[i] = j;
      hi[i] = j + 1;
    }
  }

  const auto strides = spec.strides();
  auto spatial = [&](std::size_t k) {
    auto slice = grid.slice(k);
    double acc = 0.0;
    for (int corner = 0; corner < (1 << D); ++corner) {
      double weight = 1.0;
      std::size_t idx = 0;
      for (int i = 0; i < D; ++i) {
        const bool upper = (corner >> i) & 1;
        weight *= upper ? frac[i] : 1.0 - frac[i];
        idx += static_cast<std::size_t>(upper ? hi[i] : lo[i]) * strides[i];
      }
      if (weight != 0.0) acc += weight * slice[idx];
    }
    return acc;
  };

  if (times.size() == 1) return spatial(0);
  // times are descending; find k with times[k] >= t >= times[k + 1].
  std::size_t k = 0;
  while (k + 2 < times.size() && times[k + 1] > t) ++k;
  const double t0 = times[k], t1 = times[k + 1];
  const double s = std::clamp((t0 - t) / (t0 - t1), 0.0, 1.0);
  if (s == 0.0) return spatial(k);
  if (s == 1.0) return spatial(k + 1);
  return (1.0 - s) * spatial(k) + s * spatial(k + 1);
}

bool Window::contains(const Vec& x) const {
  for (std::size_t i = 0; i < bounds.size() && static_cast<Eigen::Index>(i) < x.size(); ++i) {
    if (!bounds[i].contains(x[static_cast<Eigen::Index>(i)])) return false;
  }
  return true;
}

std::vector<std::size_t> window_nodes(const ValueGrid& grid, const Window& window) {
  std::vector<std::size_t> nodes;
  for (std::size_t k = 0; k < grid.num_nodes(); ++k) {
    if (window.contains(grid.node_state(k))) nodes.push_back(k);
  }
  return nodes;
}

FieldComparison compare_fields(const ValueGrid& reference, std::span<const double> candidate,
                               double level, const Window& window) {
  const auto nodes = window_nodes(reference, window);
  require(candidate.size() == nodes.size(),
          "compare_fields: candidate has " + std::to_string(candidate.size()) +
              " values for " + std::to_string(nodes.size()) + " window nodes");
  auto ref = reference.initial_slice();
  std::size_t inter = 0, uni = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const bool in_ref = ref[nodes[i]] <= level;
    const bool in_cand = candidate[i] <= level;
    a += in_ref;
    b += in_cand;
    inter += in_ref && in_cand;
    uni += in_ref || in_cand;
  }
  FieldComparison out;
  out.window_nodes = nodes.size();
  if (uni == 0) {
    out.iou = (a == 0 && b == 0) ? 1.0 : 0.0;
  } else {
    out.iou = static_cast<double>(inter) / static_cast<double>(uni);
  }
  if (!nodes.empty()) {
    out.vol_ref = static_cast<double>(a) / nodes.size();
    out.vol_cand = static_cast<double>(b) / nodes.size();
  }
  return out;
}

FieldComparison compare_fields(const ValueGrid& reference,
                               const std::function<double(const Vec&)>& candidate,
                               double level, const Window& window) {
  const auto nodes = window_nodes(reference, window);
  std::vector<double> values(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) values[i] = candidate(reference.node_state(nodes[i]));
  return compare_fields(reference, values, level, window);
}

}  // namespace madr
