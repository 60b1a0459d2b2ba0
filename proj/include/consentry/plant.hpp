#pragma once

// Closed-loop consensus dynamics under switching topology and injected
// attacks; fixed-step RK4 with switch instants snapped onto the grid.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "consentry/errors.hpp"
#include "consentry/numerics.hpp"
#include "consentry/topology.hpp"

namespace consentry {

/// Attack-side signal source consumed by the simulator. `ua(t)` may be
/// queried at RK4 stage times inside the current step; `advance` moves any
/// attacker-internal state from t to t+dt; `us(t)` is sampled on the grid.
class AttackSource {
 public:
  virtual ~AttackSource() = default;
  virtual Vector ua(double t) const = 0;
  virtual Vector us(double t) const = 0;
  virtual void advance(double t, double dt) = 0;
  virtual int ua_dim() const = 0;
  virtual int us_dim() const = 0;
};

class NoAttack : public AttackSource {
 public:
  explicit NoAttack(int us_dim = 0) : us_dim_(us_dim) {}
  Vector ua(double) const override { return Vector::Zero(0); }
  Vector us(double) const override { return Vector::Zero(us_dim_); }
  void advance(double, double) override {}
  int ua_dim() const override { return 0; }
  int us_dim() const override { return us_dim_; }

 private:
  int us_dim_;
};

/// Closed-loop model: gains, switching library, attacked actuators F̄ and
/// monitored position/velocity sets (defining B and C = diag{C_x, C_v}).
struct PlantModel {
  double alpha = 1.0;
  double gamma = 2.0;
  TopologyLibrary lib;
  std::vector<int> attacked_actuators;     // F̄ (0-based, ascending)
  std::vector<int> monitored_positions;    // M_x
  std::vector<int> monitored_velocities;   // M_v

  int n() const { return lib.n(); }
  int state_dim() const { return 2 * n(); }
  int num_outputs() const {
    return static_cast<int>(monitored_positions.size() + monitored_velocities.size());
  }

  void validate() const {
    if (alpha <= 0 || gamma <= 0)
      throw Error(ErrorCode::invalid_input, "PlantModel: gains must be positive");
    lib.validate();
    auto check = [&](const std::vector<int>& s, const char* who) {
      for (int v : s)
        if (v < 0 || v >= n())
          throw Error(ErrorCode::invalid_input, std::string("PlantModel: ") + who + " out of range");
    };
    check(attacked_actuators, "attacked actuator");
    check(monitored_positions, "monitored position");
    check(monitored_velocities, "monitored velocity");
  }

  /// B = [0; I_F̄]: one column per attacked actuator, entering velocity rows.
  Matrix input_matrix() const {
    Matrix b = Matrix::Zero(state_dim(), attacked_actuators.size());
    for (size_t k = 0; k < attacked_actuators.size(); ++k)
      b(n() + attacked_actuators[k], static_cast<int>(k)) = 1.0;
    return b;
  }

  /// C = diag{C_x, C_v} stacked as [position rows; velocity rows].
  Matrix output_matrix() const {
    Matrix c = Matrix::Zero(num_outputs(), state_dim());
    int r = 0;
    for (int v : monitored_positions) c(r++, v) = 1.0;
    for (int v : monitored_velocities) c(r++, n() + v) = 1.0;
    return c;
  }

  /// The position-space stack [C_x; C_v] used by the switching conditions.
  Matrix monitor_stack() const {
    Matrix s = Matrix::Zero(num_outputs(), n());
    int r = 0;
    for (int v : monitored_positions) s(r++, v) = 1.0;
    for (int v : monitored_velocities) s(r++, v) = 1.0;
    return s;
  }
};

inline Matrix assemble_mode_matrix(const PlantModel& p, int q) {
  const int n = p.n();
  Matrix a = Matrix::Zero(2 * n, 2 * n);
  a.topRightCorner(n, n) = Matrix::Identity(n, n);
  a.bottomLeftCorner(n, n) = -p.alpha * laplacian(p.lib.mode(q));
  a.bottomRightCorner(n, n) = -p.gamma * Matrix::Identity(n, n);
  return a;
}

/// Time-gridded record of a closed-loop run. Columns are grid points.
struct SimTrace {
  std::vector<double> times;
  Matrix states;      // 2N x T
  Matrix inputs_ua;   // |F̄| x T
  Matrix inputs_us;   // |M| x T
  Matrix outputs;     // |M| x T, y = Cx - u_s
  std::vector<int> mode_at;  // per grid point
  bool diverged = false;

  int size() const { return static_cast<int>(times.size()); }

  int index_at(double t) const {
    if (times.empty()) throw Error(ErrorCode::invalid_input, "SimTrace: empty trace");
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.end()) return size() - 1;
    if (it == times.begin()) return 0;
    const size_t hi = static_cast<size_t>(it - times.begin());
    return (t - times[hi - 1] < times[hi] - t) ? static_cast<int>(hi - 1) : static_cast<int>(hi);
  }
};

inline constexpr double kOverflowGuard = 1e12;

namespace detail {

/// One classical RK4 step of x' = a x + b u(t) with u queried at stage times.
template <typename InputFn>
Vector rk4_step(const Matrix& a, const Matrix& b, const Vector& x, double t, double dt,
                InputFn&& u) {
  const Vector u0 = u(t);
  const Vector uh = u(t + 0.5 * dt);
  const Vector u1 = u(t + dt);
  auto f = [&](const Vector& xs, const Vector& us) -> Vector {
    if (b.cols() == 0) return a * xs;
    return a * xs + b * us;
  };
  const Vector k1 = f(x, u0);
  const Vector k2 = f(x + 0.5 * dt * k1, uh);
  const Vector k3 = f(x + 0.5 * dt * k2, uh);
  const Vector k4 = f(x + dt * k3, u1);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// Integrates Eq.-(5) dynamics over [t0, t_end] on a uniform dt grid,
/// snapping the switching breakpoints to grid indices. A state-norm overflow
/// beyond 1e12 truncates the trace and flags divergence (the expected ZDA
/// outcome instead of numeric blowup).
inline SimTrace simulate(const PlantModel& p, const SwitchingSignal& sig, AttackSource& attack,
                         const Vector& x0, double t_end, double dt) {
  p.validate();
  sig.validate();
  if (dt <= 0) throw Error(ErrorCode::invalid_input, "simulate: dt must be positive");
  if (x0.size() != p.state_dim())
    throw Error(ErrorCode::invalid_input, "simulate: initial state dimension mismatch");
  if (!x0.allFinite()) throw Error(ErrorCode::invalid_input, "simulate: non-finite x0");
  if (attack.ua_dim() != static_cast<int>(p.attacked_actuators.size()))
    throw Error(ErrorCode::dimension_mismatch, "simulate: attack input width mismatch");

  const double t0 = sig.breakpoints.front();
  if (t_end <= t0) throw Error(ErrorCode::invalid_input, "simulate: t_end before t0");
  const int steps = static_cast<int>(std::llround((t_end - t0) / dt));

  // Snap switch instants onto the grid and pre-resolve per-step modes.
  std::vector<int> switch_step(sig.breakpoints.size());
  for (size_t k = 0; k < sig.breakpoints.size(); ++k)
    switch_step[k] = static_cast<int>(std::llround((sig.breakpoints[k] - t0) / dt));

  const Matrix b = p.input_matrix();
  const Matrix c = p.output_matrix();
  std::vector<Matrix> a_mode;
  for (int q = 1; q <= p.lib.num_modes(); ++q) a_mode.push_back(assemble_mode_matrix(p, q));

  SimTrace tr;
  tr.times.reserve(steps + 1);
  tr.states.resize(p.state_dim(), steps + 1);
  tr.inputs_ua.resize(b.cols(), steps + 1);
  tr.inputs_us.resize(p.num_outputs(), steps + 1);
  tr.outputs.resize(p.num_outputs(), steps + 1);
  tr.mode_at.reserve(steps + 1);

  Vector x = x0;
  auto mode_for_step = [&](int k) {
    int m = sig.mode_indices.front();
    for (size_t s = 0; s < switch_step.size(); ++s)
      if (k >= switch_step[s]) m = sig.mode_indices[s];
    return m;
  };

  int recorded = 0;
  for (int k = 0; k <= steps; ++k) {
    const double t = t0 + k * dt;
    const int q = mode_for_step(k);
    const Vector ua = attack.ua(t);
    const Vector us = attack.us(t);
    tr.times.push_back(t);
    tr.states.col(k) = x;
    tr.inputs_ua.col(k) = ua;
    tr.inputs_us.col(k) = us;
    tr.outputs.col(k) = c * x - us;
    tr.mode_at.push_back(q);
    ++recorded;
    if (x.cwiseAbs().maxCoeff() > kOverflowGuard) {
      tr.diverged = true;
      break;
    }
    if (k == steps) break;
    x = detail::rk4_step(a_mode[static_cast<size_t>(q - 1)], b, x, t, dt,
                         [&](double ts) { return attack.ua(ts); });
    attack.advance(t, dt);
  }
  tr.times.resize(recorded);
  tr.states.conservativeResize(Eigen::NoChange, recorded);
  tr.inputs_ua.conservativeResize(Eigen::NoChange, recorded);
  tr.inputs_us.conservativeResize(Eigen::NoChange, recorded);
  tr.outputs.conservativeResize(Eigen::NoChange, recorded);
  tr.mode_at.resize(recorded);
  return tr;
}

/// max_{i,j} |x_i - x_j| + max_i |v_i| at the nearest grid point.
inline double consensus_error(const SimTrace& tr, double t) {
  const int k = tr.index_at(t);
  const int n = static_cast<int>(tr.states.rows()) / 2;
  const auto x = tr.states.col(k).head(n);
  const auto v = tr.states.col(k).tail(n);
  return (x.maxCoeff() - x.minCoeff()) + v.cwiseAbs().maxCoeff();
}

}  // namespace consentry
