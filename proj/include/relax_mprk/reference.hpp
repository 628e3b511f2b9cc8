#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "relax_mprk/pdrs.hpp"
#include "relax_mprk/schemes.hpp"
#include "relax_mprk/steppers.hpp"

namespace relax_mprk {

/// Fine-step MPRK43I(0.5, 0.75) solution queried at non-decreasing times.
/// Each query steps from the previously returned point, so a trajectory of
/// n output times costs roughly (t_last - t0) / h steps.
class FineReference {
 public:
  FineReference(const PdrsSystem& sys, double t0, std::span<const double> u0, double h)
      : sys_(&sys),
        scheme_(build_scheme(SchemeKind::MPRK43I, 0.5, 0.75)),
        t_(t0),
        u_(u0.begin(), u0.end()),
        h_(h) {
    if (!(h > 0.0)) throw std::invalid_argument("FineReference: step must be positive");
  }

  /// The oracle step for a base step dt (dt / 1000).
  static double step_for(double dt) { return dt / 1000.0; }

  const Vector& at(double t) {
    if (t < t_) throw std::invalid_argument("FineReference: times must be non-decreasing");
    while (t - t_ > 0.0) {
      const double remaining = t - t_;
      // Avoid a sliver step at the end.
      const double h = remaining <= 1.5 * h_ ? remaining : h_;
      u_ = step(*sys_, scheme_, t_, u_, h).u_next;
      t_ = (h == remaining) ? t : t_ + h;
    }
    return u_;
  }

  double time() const { return t_; }

 private:
  const PdrsSystem* sys_;
  MpScheme scheme_;
  double t_;
  Vector u_;
  double h_;
};

}  // namespace relax_mprk
