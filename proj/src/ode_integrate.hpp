#pragma once

#include <algorithm>
#include <utility>

#include <boost/numeric/odeint.hpp>

namespace moe::detail {

// Adaptive dopri5 drive shared by the window evolution, its adjoint, and the
// dense-state oracle. State must be a boost-compatible range (std::vector of
// double or complex<double>).
template <class System, class State>
void integrate_adaptive_checked(System&& sys, State& x, double t0, double t1, double abs_tol,
                                double rel_tol, double rate_scale) {
    namespace ode = boost::numeric::odeint;
    if (t1 <= t0) return;
    using stepper_t = ode::runge_kutta_dopri5<State>;
    auto controlled = ode::make_controlled(abs_tol, rel_tol, stepper_t());
    // start well inside the explicit stability region; the controller adapts up
    double dt0 = std::min(t1 - t0, 0.1 / (1.0 + rate_scale));
    ode::integrate_adaptive(controlled, std::forward<System>(sys), x, t0, t1, dt0);
}

} // namespace moe::detail
