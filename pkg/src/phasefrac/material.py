"""1-D homogeneous elastoplastic material point with phase-field damage.

Uniaxial reduction of the coupled elastoplastic fracture model: effective
stress ``E*(eps - eps_p)``, ideal-or-linear isotropic hardening, a damage
variable ``d`` in [0, 1] driven by a monotone history of the crack driving
force, and the quadratic degradation ``(1-d)**2`` on stored energy and
stress.  Rate-independent by default (``eta_p = eta_d = 0``); both viscous
regularizations are supported.

Units: stress-like quantities and energy densities in GPa, strain
dimensionless, pseudo-time in seconds.  The update is staggered per step:
plastic return map at frozen damage, crack-driving history, damage, then
stress and the dissipation ledger.  Each sub-step is closed form, so a step
is exactly reproducible from the previous state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MaterialParams",
    "MaterialState",
    "Trajectory",
    "elastic_energy",
    "plastic_work",
    "return_map_plastic",
    "update_history",
    "update_phase_field",
    "step",
    "simulate",
    "energy_balance_residual",
    "onset_strain",
    "strain_for_damage",
]

# slack admitted by the discrete yield-consistency check [GPa]
YIELD_TOL = 1e-9


def _check_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class MaterialParams:
    """Constants of one material realization.

    ``y0 = inf`` is the brittle limit: the yield surface is never reached and
    the response stays elastic-fracturing.

    Attributes
    ----------
    E : Young's modulus [GPa]
    y0 : initial yield stress [GPa]
    psi_c : critical fracture energy density [GPa]
    zeta : post-critical softening shape parameter [-]
    h : isotropic hardening modulus [GPa]
    eta_p : plastic viscosity [GPa*s]
    eta_d : crack viscosity [GPa*s]
    """

    E: float
    y0: float = math.inf
    psi_c: float = 0.05
    zeta: float = 1.0
    h: float = 0.0
    eta_p: float = 0.0
    eta_d: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.E) and self.E > 0.0):
            raise ValueError(f"E must be positive and finite, got {self.E!r}")
        if not self.y0 > 0.0:
            raise ValueError(f"y0 must be positive (inf allowed), got {self.y0!r}")
        if not (math.isfinite(self.psi_c) and self.psi_c > 0.0):
            raise ValueError(f"psi_c must be positive, got {self.psi_c!r}")
        if not (math.isfinite(self.zeta) and self.zeta > 0.0):
            raise ValueError(f"zeta must be positive, got {self.zeta!r}")
        for name in ("h", "eta_p", "eta_d"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be nonnegative, got {value!r}")

    @property
    def brittle(self) -> bool:
        return math.isinf(self.y0)


@dataclass(frozen=True)
class MaterialState:
    """Full per-step state.

    ``psi_e_eff`` is the undegraded elastic energy density, ``psi_e_stored``
    the degraded stored energy ``(1-d)**2 * psi_e_eff``.  ``D_p`` and ``D_d``
    are the accumulated plastic and fracture dissipation ledgers.
    """

    eps: float = 0.0
    eps_p: float = 0.0
    alpha: float = 0.0
    d: float = 0.0
    H: float = 0.0
    sigma: float = 0.0
    psi_e_eff: float = 0.0
    psi_e_stored: float = 0.0
    psi_p: float = 0.0
    D_p: float = 0.0
    D_d: float = 0.0
    t: float = 0.0


def elastic_energy(eps_e: float, E: float) -> float:
    """Undegraded elastic energy density ``0.5 * E * eps_e**2`` [GPa]."""
    _check_finite(eps_e=eps_e)
    if not E > 0.0:
        raise ValueError(f"E must be positive, got {E!r}")
    return 0.5 * E * eps_e * eps_e


def plastic_work(alpha: float, params: MaterialParams) -> float:
    """Hardening work ``y0*alpha + h/2*alpha**2`` [GPa].

    Returns 0 at ``alpha = 0`` so the brittle ``y0 = inf`` sentinel never
    produces ``inf * 0``.
    """
    if alpha == 0.0:
        return 0.0
    return params.y0 * alpha + 0.5 * params.h * alpha * alpha


def return_map_plastic(
    eps_next: float, state: MaterialState, params: MaterialParams, dt: float
) -> tuple[float, float]:
    """Radial return for the uniaxial effective stress; returns (eps_p, alpha).

    The degradation factor multiplies both the driving force and the
    resistance, so yielding is checked on the undegraded trial stress
    ``E*(eps_next - eps_p)`` against ``y0 + h*alpha``.  Viscous
    overstress enters through ``eta_p/dt`` in the consistency denominator.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    _check_finite(eps_next=eps_next)
    sigma_trial = params.E * (eps_next - state.eps_p)
    yield_stress = params.y0 + params.h * state.alpha
    if abs(sigma_trial) <= yield_stress:  # also covers the brittle y0 = inf case
        return state.eps_p, state.alpha
    dlam = (abs(sigma_trial) - yield_stress) / (params.E + params.h + params.eta_p / dt)
    eps_p_next = state.eps_p + math.copysign(dlam, sigma_trial)
    return eps_p_next, state.alpha + dlam


def update_history(
    H_prev: float,
    psi_e_eff: float,
    psi_p: float,
    params: MaterialParams,
    normalized: bool = False,
) -> float:
    """Monotone crack-driving history.

    The driving force is ``zeta * <psi_e + psi_p - psi_c>`` in GPa; with
    ``normalized=True`` it is divided by ``psi_c`` (dimensionless variant,
    common in the threshold-type damage literature).
    """
    _check_finite(H_prev=H_prev, psi_e_eff=psi_e_eff, psi_p=psi_p)
    if H_prev < 0.0:
        raise ValueError(f"H_prev must be nonnegative, got {H_prev!r}")
    drive = params.zeta * max(0.0, psi_e_eff + psi_p - params.psi_c)
    if normalized:
        drive /= params.psi_c
    return max(H_prev, drive)


def update_phase_field(d_prev: float, H: float, eta_d: float, dt: float) -> float:
    """Implicit one-step damage update, clamped to [d_prev, 1].

    Homogeneous evolution ``eta_d * d_dot = (1-d)*H - d`` discretized
    backward Euler; ``eta_d = 0`` reduces to the fixed point ``H/(1+H)``.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if not 0.0 <= d_prev <= 1.0:
        raise ValueError(f"d_prev must be in [0, 1], got {d_prev!r}")
    _check_finite(H=H)
    if H < 0.0:
        raise ValueError(f"H must be nonnegative, got {H!r}")
    r = eta_d / dt
    d_new = (r * d_prev + H) / (r + 1.0 + H)
    return max(d_prev, min(1.0, d_new))


def step(
    state: MaterialState,
    eps_next: float,
    dt: float,
    params: MaterialParams,
    history_normalized: bool = False,
) -> MaterialState:
    """Advance one strain increment; returns the new state.

    Staggered order: (1) plastic return map at frozen damage, (2) energies,
    (3) history, (4) damage, (5) degraded stress and stored energy,
    (6) end-of-step rectangle-rule dissipation increments
    ``dD_p = sigma * d(eps_p)`` and ``dD_d = 2*(1-d)*psi_e_eff * dd``.
    """
    eps_p_next, alpha_next = return_map_plastic(eps_next, state, params, dt)
    psi_e_eff = elastic_energy(eps_next - eps_p_next, params.E)
    psi_p = plastic_work(alpha_next, params)
    H_next = update_history(state.H, psi_e_eff, psi_p, params, normalized=history_normalized)
    d_next = update_phase_field(state.d, H_next, params.eta_d, dt)
    g = (1.0 - d_next) ** 2
    sigma = g * params.E * (eps_next - eps_p_next)
    f_d = 2.0 * (1.0 - d_next) * psi_e_eff
    return MaterialState(
        eps=eps_next,
        eps_p=eps_p_next,
        alpha=alpha_next,
        d=d_next,
        H=H_next,
        sigma=sigma,
        psi_e_eff=psi_e_eff,
        psi_e_stored=g * psi_e_eff,
        psi_p=psi_p,
        D_p=state.D_p + sigma * (eps_p_next - state.eps_p),
        D_d=state.D_d + f_d * (d_next - state.d),
        t=state.t + dt,
    )


@dataclass
class Trajectory:
    """Ordered states of one load path; ``states[0]`` is the virgin state."""

    params: MaterialParams
    states: list[MaterialState]
    dt: float
    history_normalized: bool = False

    def __len__(self) -> int:
        return len(self.states)

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.states], dtype=np.float64)


def simulate(
    params: MaterialParams,
    eps_max: float,
    n_steps: int,
    dt: float | None = None,
    history_normalized: bool = False,
) -> Trajectory:
    """Integrate a monotone strain ramp 0 -> eps_max in n_steps increments."""
    if n_steps < 2:
        raise ValueError(f"n_steps must be >= 2, got {n_steps}")
    _check_finite(eps_max=eps_max)
    if not eps_max > 0.0:
        raise ValueError(f"eps_max must be positive, got {eps_max!r}")
    if dt is None:
        dt = 1.0 / n_steps  # unit pseudo-time interval
    grid = np.linspace(0.0, eps_max, n_steps + 1)
    states = [MaterialState()]
    for eps in grid[1:]:
        states.append(step(states[-1], float(eps), dt, params, history_normalized))
    return Trajectory(params=params, states=states, dt=dt, history_normalized=history_normalized)


def energy_balance_residual(trajectory: Trajectory, floor: float = 1e-12) -> float:
    """Relative gap between external work and stored energy + dissipation.

    External work is the trapezoidal integral of sigma over eps; the ledger
    side is the final ``(1-d)**2 psi_e + D_p + D_d``.  Converges to zero at
    first order in the step size.
    """
    if len(trajectory) < 2:
        raise ValueError("trajectory must have at least 2 states")
    eps = trajectory.column("eps")
    sigma = trajectory.column("sigma")
    w_ext = float(np.trapezoid(sigma, eps))
    last = trajectory.states[-1]
    ledger = last.psi_e_stored + last.D_p + last.D_d
    return abs(w_ext - ledger) / max(w_ext, floor)


def onset_strain(params: MaterialParams) -> float:
    """Strain at which the crack driving force first becomes positive.

    Brittle: ``sqrt(2 psi_c / E)``.  Ductile with ideal plasticity yielding
    before fracture: ``y0/(2E) + psi_c/y0``.  General case (hardening, or
    fracture inside the elastic branch) falls back to the energy threshold
    root solved by :func:`strain_for_damage` at zero damage.
    """
    brittle_eps = math.sqrt(2.0 * params.psi_c / params.E)
    if params.brittle or brittle_eps <= params.y0 / params.E:
        return brittle_eps
    if params.h == 0.0:
        return params.y0 / (2.0 * params.E) + params.psi_c / params.y0
    return _strain_for_energy(params, params.psi_c)


def _monotone_energy(params: MaterialParams, eps: float) -> float:
    """psi_e + psi_p on a monotone ramp to eps (closed-form branches)."""
    eps_y = params.y0 / params.E
    if eps <= eps_y:
        return 0.5 * params.E * eps * eps
    alpha = (params.E * eps - params.y0) / (params.E + params.h)
    sig_eff = params.y0 + params.h * alpha
    return sig_eff * sig_eff / (2.0 * params.E) + params.y0 * alpha + 0.5 * params.h * alpha * alpha


def _strain_for_energy(params: MaterialParams, target: float) -> float:
    """Invert the monotone ramp energy: smallest eps with psi_e+psi_p >= target."""
    lo = 0.0
    hi = max(1.0, 2.0 * math.sqrt(2.0 * target / params.E))
    while _monotone_energy(params, hi) < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _monotone_energy(params, mid) < target:
            lo = mid
        else:
            hi = mid
    return hi


def strain_for_damage(
    params: MaterialParams, d_target: float, history_normalized: bool = False
) -> float:
    """Strain at which a rate-independent monotone ramp reaches d_target.

    Only meaningful for ``eta_d = 0`` (the implicit viscous update lags the
    fixed point, so the returned strain is then a lower bound).
    """
    if not 0.0 < d_target < 1.0:
        raise ValueError(f"d_target must be in (0, 1), got {d_target!r}")
    h_target = d_target / (1.0 - d_target)
    slack = h_target / params.zeta
    if history_normalized:
        slack *= params.psi_c
    return _strain_for_energy(params, params.psi_c + slack)
