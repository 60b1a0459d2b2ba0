#pragma once

// Synthesis and runtime injection of the two stealthy attack classes:
// zero-dynamics attacks (exponential input aligned with a Rosenbrock-pencil
// zero) and covert attacks (sensor correction from an attacker-side model
// replica), plus trace-level stealthiness verification.

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "consentry/errors.hpp"
#include "consentry/numerics.hpp"
#include "consentry/plant.hpp"

namespace consentry {

/// ZDA payload: u_a(t) = amplitude * Re-synthesis of u0 e^{lambda0 (t - t_a)}.
/// For a conjugate pair the real signal 2 Re(u0 e^{lambda0 t}) is injected
/// with the matching real state offset 2 Re(x0 e^{lambda0 t}).
struct ZdaAttack {
  Complex lambda0;
  VectorC x0;          // state part of the zeroing direction (|x0|^2+|u0|^2 = 1)
  VectorC u0;          // input part, indexed by F̄
  double t_a = 0.0;
  double amplitude = 1.0;
  double residual = 0.0;

  bool is_real() const { return std::abs(lambda0.imag()) < 1e-12; }

  /// Real state offset x̃(t) added to the attack-free trajectory.
  Vector state_offset(double t) const {
    if (t < t_a) return Vector::Zero(x0.size());
    const Complex g = std::exp(lambda0 * (t - t_a));
    if (is_real()) return amplitude * (x0 * g).real();
    return amplitude * 2.0 * (x0 * g).real();
  }

  Vector initial_offset() const { return state_offset(t_a); }
};

inline Vector zda_signal(const ZdaAttack& z, double t) {
  if (t < z.t_a) return Vector::Zero(z.u0.size());
  const Complex g = std::exp(z.lambda0 * (t - z.t_a));
  if (z.is_real()) return z.amplitude * (z.u0 * g).real();
  return z.amplitude * 2.0 * (z.u0 * g).real();
}

/// Synthesizes a ZDA for the normal mode from the invariant zeros of
/// (A_1, B, C, 0). Prefers an unstable zero (Re > 0) so the attack diverges;
/// directions whose input part vanishes are skipped (they inject nothing).
/// Returns nullopt when no drivable zeroing direction exists.
inline std::optional<ZdaAttack> synth_zda(const PlantModel& p, double t_a = 0.0,
                                          double amplitude = 1.0) {
  p.validate();
  if (p.attacked_actuators.empty()) return std::nullopt;
  const Matrix a1 = assemble_mode_matrix(p, 1);
  const Matrix b = p.input_matrix();
  const Matrix c = p.output_matrix();
  auto zeros = invariant_zeros(a1, b, c);  // degenerate pencils propagate

  const ZeroDirection* pick = nullptr;
  for (const auto& z : zeros) {
    if (z.u0.norm() <= 1e-8) continue;
    if (z.lambda0.real() > 1e-9) { pick = &z; break; }  // list is sorted by Re desc
    if (!pick) pick = &z;
  }
  if (!pick) return std::nullopt;

  ZdaAttack atk;
  atk.lambda0 = pick->lambda0;
  atk.x0 = pick->x0;
  atk.u0 = pick->u0;
  atk.t_a = t_a;
  atk.amplitude = amplitude;
  atk.residual = pick->residual;
  // x̃0 must lie in ker(C); the pencil's second block row guarantees it.
  const double cker = (c.cast<Complex>() * atk.x0).norm();
  if (cker > 1e-8)
    throw Error(ErrorCode::invalid_input, "synth_zda: direction escapes ker(C)");
  return atk;
}

/// Attacker-side replica of the normal-mode plant. The replica always
/// integrates with the mode-1 matrix: the attacker does not know the
/// defender's switching times, which is exactly the discrepancy the
/// detection architecture exploits.
class CovertAttacker {
 public:
  CovertAttacker(const PlantModel& p, Vector ua_magnitudes, double t_a)
      : a1_(assemble_mode_matrix(p, 1)),
        c_(p.output_matrix()),
        b_(p.input_matrix()),
        mag_(std::move(ua_magnitudes)),
        t_a_(t_a),
        x_tilde_(Vector::Zero(p.state_dim())) {
    if (mag_.size() != static_cast<Eigen::Index>(p.attacked_actuators.size()))
      throw Error(ErrorCode::dimension_mismatch, "CovertAttacker: magnitude width mismatch");
  }

  Vector ua(double t) const {
    if (t < t_a_) return Vector::Zero(mag_.size());
    return mag_;
  }

  Vector us() const { return c_ * x_tilde_; }
  const Vector& state() const { return x_tilde_; }

  /// Advances the replica by one RK4 step (same scheme as the plant).
  void step(double t, double dt) {
    x_tilde_ = detail::rk4_step(a1_, b_, x_tilde_, t, dt, [&](double ts) { return ua(ts); });
  }

 private:
  Matrix a1_, c_, b_;
  Vector mag_;
  double t_a_;
  Vector x_tilde_;
};

/// covert_step: advance the replica and return the current injection pair.
inline std::pair<Vector, Vector> covert_step(CovertAttacker& ca, double t, double dt) {
  const Vector ua = ca.ua(t);
  ca.step(t, dt);
  return {ua, ca.us()};
}

/// Simulator-facing driver holding one of the attack variants.
class AttackDriver : public AttackSource {
 public:
  enum class Variant { none, zda, covert };

  static AttackDriver make_none(const PlantModel& p) {
    AttackDriver d;
    d.variant_ = Variant::none;
    d.ua_dim_ = static_cast<int>(p.attacked_actuators.size());
    d.us_dim_ = p.num_outputs();
    return d;
  }

  static AttackDriver make_zda(const PlantModel& p, ZdaAttack z) {
    AttackDriver d;
    d.variant_ = Variant::zda;
    d.zda_ = std::move(z);
    d.ua_dim_ = static_cast<int>(p.attacked_actuators.size());
    d.us_dim_ = p.num_outputs();
    return d;
  }

  static AttackDriver make_covert(const PlantModel& p, Vector magnitudes, double t_a) {
    AttackDriver d;
    d.variant_ = Variant::covert;
    d.covert_ = std::make_shared<CovertAttacker>(p, std::move(magnitudes), t_a);
    d.ua_dim_ = static_cast<int>(p.attacked_actuators.size());
    d.us_dim_ = p.num_outputs();
    return d;
  }

  Variant variant() const { return variant_; }
  const std::optional<ZdaAttack>& zda() const { return zda_; }
  const CovertAttacker* covert() const { return covert_.get(); }

  Vector ua(double t) const override {
    switch (variant_) {
      case Variant::none: return Vector::Zero(ua_dim_);
      case Variant::zda: return zda_signal(*zda_, t);
      case Variant::covert: return covert_->ua(t);
    }
    return Vector::Zero(ua_dim_);
  }

  Vector us(double) const override {
    if (variant_ == Variant::covert) return covert_->us();
    return Vector::Zero(us_dim_);
  }

  void advance(double t, double dt) override {
    if (variant_ == Variant::covert) covert_->step(t, dt);
  }

  int ua_dim() const override { return ua_dim_; }
  int us_dim() const override { return us_dim_; }

 private:
  Variant variant_ = Variant::none;
  std::optional<ZdaAttack> zda_;
  std::shared_ptr<CovertAttacker> covert_;
  int ua_dim_ = 0;
  int us_dim_ = 0;
};

/// Eq.-(9) check at trace level: outputs indistinguishable over the window.
inline bool verify_stealthy(const SimTrace& tr_attacked, const SimTrace& tr_free,
                            double t_begin, double t_end, double tol) {
  if (tr_attacked.outputs.rows() != tr_free.outputs.rows())
    throw Error(ErrorCode::dimension_mismatch, "verify_stealthy: output dims differ");
  const int n = std::min(tr_attacked.size(), tr_free.size());
  for (int k = 0; k < n; ++k)
    if (std::abs(tr_attacked.times[k] - tr_free.times[k]) > 1e-12)
      throw Error(ErrorCode::dimension_mismatch, "verify_stealthy: grids differ");
  double worst = 0.0;
  for (int k = 0; k < n; ++k) {
    const double t = tr_attacked.times[k];
    if (t < t_begin - 1e-12 || t > t_end + 1e-12) continue;
    if (tr_attacked.outputs.rows() == 0) continue;
    worst = std::max(worst,
                     (tr_attacked.outputs.col(k) - tr_free.outputs.col(k)).cwiseAbs().maxCoeff());
  }
  return worst <= tol;
}

}  // namespace consentry
