"""Geodesics on the model manifold and boundary-limit model reduction.

A geodesic launched in the sloppiest information direction runs into the
manifold boundary after a finite length; the parameter whose coordinate
diverges there names the next reduction limit.  The geodesic ODE is
integrated in rescaled arc variables (time in units of the initial boundary
distance estimate, velocity scaled to unit norm) so its components are all
order one regardless of how degenerate the metric is.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ChainDivergenceError, DomainError, SolverError
from .fim import central_difference_jacobian, fim, generator_map, spectrum
from .generator import (
    DEFAULT_GRID,
    IQ_STANDARD,
    LIMIT_CHAIN,
    LIMIT_REMOVES,
    IndependentParams,
    LimitFlags,
    ObservationGrid,
)

__all__ = [
    "GeodesicState",
    "GeodesicTrace",
    "BoundaryDiagnosis",
    "christoffel_contraction",
    "contraction_for_map",
    "trace_geodesic",
    "diagnose_boundary",
    "mbam_step",
    "mbam_chain",
    "sloppiest_direction",
]

#: relative eigenvalue floor for inverting the metric near degenerate boundaries
METRIC_FLOOR = 1e-13

#: default finite-difference steps (log-parameter units)
JAC_STEP = 1e-4
DIR_STEP = 1e-2

#: model evaluations allowed per geodesic chunk before it counts as stalled
_CHUNK_EVAL_BUDGET = 300


class _ChunkStalled(Exception):
    """Internal: a geodesic chunk exhausted its evaluation budget."""


@dataclass(frozen=True)
class GeodesicState:
    theta: np.ndarray  # log-parameters
    velocity: np.ndarray  # d(theta)/d(tau)


@dataclass(frozen=True)
class GeodesicTrace:
    taus: np.ndarray
    thetas: np.ndarray  # (n_steps, n_params) log-parameters
    velocities: np.ndarray  # (n_steps, n_params)
    terminated: str  # "boundary" | "max_tau" | "failure"
    param_names: tuple[str, ...]
    detail: str = ""

    def __post_init__(self):
        if len(self.taus) > 1 and not np.all(np.diff(self.taus) > 0):
            raise DomainError("geodesic trace times must be strictly increasing")

    @property
    def states(self) -> list[GeodesicState]:
        return [GeodesicState(t, v) for t, v in zip(self.thetas, self.velocities)]

    def speed_norms(self) -> np.ndarray:
        return np.linalg.norm(self.velocities, axis=1)


@dataclass(frozen=True)
class BoundaryDiagnosis:
    limit_param: str
    direction: str  # "to_zero" | "to_infinity"
    tau_boundary: float
    velocity_alignment: float

    def __post_init__(self):
        if not 0.0 <= self.velocity_alignment <= 1.0:
            raise DomainError("velocity alignment must lie in [0, 1]")


def _floored_inverse_apply(I: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve I x = rhs through an eigendecomposition with a relative floor.

    Near a boundary the metric degenerates; flooring its eigenvalues keeps the
    geodesic acceleration finite until a termination criterion fires.
    """
    lam, U = np.linalg.eigh(I)
    lam_max = lam[-1]
    if not np.isfinite(lam_max) or lam_max <= 0:
        raise SolverError("metric is not positive", condition_number=float("inf"))
    lam_f = np.maximum(lam, METRIC_FLOOR * lam_max)
    return U @ ((U.T @ rhs) / lam_f)


def contraction_for_map(f: Callable[[np.ndarray], np.ndarray], log_theta: np.ndarray,
                        v: np.ndarray, jac_step: float = JAC_STEP,
                        dir_step: float = DIR_STEP) -> np.ndarray:
    """Connection-coefficient contraction Gamma[v, v] for a batched map.

    Evaluates metric^-1 J^T (d^2 Y / d tau^2 along v); the directional second
    derivative is a central second difference along v, so the cost per call is
    2n + 3 map evaluations in a single batch rather than O(n^2).
    """
    log_theta = np.asarray(log_theta, dtype=float)
    v = np.asarray(v, dtype=float)
    n = log_theta.size
    vn = np.linalg.norm(v)
    if vn == 0:
        return np.zeros(n)
    vhat = v / vn
    pts = np.repeat(log_theta[None, :], 2 * n + 3, axis=0)
    for j in range(n):
        pts[2 * j, j] += jac_step
        pts[2 * j + 1, j] -= jac_step
    pts[2 * n + 1] += dir_step * vhat
    pts[2 * n + 2] -= dir_step * vhat
    Y = f(pts)
    if not np.all(np.isfinite(Y)):
        raise SolverError("map returned non-finite values during contraction")
    J = np.stack([(Y[2 * j] - Y[2 * j + 1]) / (2 * jac_step) for j in range(n)], axis=1)
    d2 = (Y[2 * n + 1] - 2.0 * Y[2 * n] + Y[2 * n + 2]) / dir_step**2 * vn**2
    return _floored_inverse_apply(J.T @ J, J.T @ d2)


def christoffel_contraction(p: IndependentParams, v: np.ndarray,
                            flags: LimitFlags = LimitFlags(),
                            grid: ObservationGrid = DEFAULT_GRID, *,
                            iq_form: str = IQ_STANDARD) -> np.ndarray:
    """Gamma[v, v] for the generator model at a parameter point (log coordinates)."""
    f = generator_map(flags, grid, iq_form=iq_form)
    theta = np.log([getattr(p, nm) for nm in flags.active_params()])
    return contraction_for_map(f, theta, v)


def sloppiest_direction(eigenvalues: np.ndarray, eigenvectors: np.ndarray) -> np.ndarray:
    """Metric-normalized initial velocity along the least identifiable mode.

    The sign is chosen so the dominant component points toward decreasing
    log-parameters, which is where the reduction limits of this model live.
    """
    u = eigenvectors[:, -1].copy()
    if u[np.argmax(np.abs(u))] > 0:
        u = -u
    lam_min = eigenvalues[-1]
    if lam_min <= 0:
        raise SolverError("metric has a non-positive eigenvalue; cannot normalize")
    return u / math.sqrt(lam_min)


def trace_geodesic(f: Callable[[np.ndarray], np.ndarray], start: GeodesicState, *,
                   tau_max: float, vel_ratio: float = 1e3, log_bound: float = 25.0,
                   rtol: float = 1e-6, atol: float = 1e-8,
                   jac_step: float = JAC_STEP, dir_step: float = DIR_STEP,
                   plateau_ratio: float = 10.0, plateau_growth: float = 0.02,
                   param_names: Sequence[str] | None = None) -> GeodesicTrace:
    """Integrate the geodesic equation until a boundary indicator fires.

    Three signals count as reaching a boundary: a log-parameter exceeding
    ``log_bound``, the velocity norm growing past ``vel_ratio`` times its
    initial value, or the velocity saturating against the metric floor (risen
    by at least ``plateau_ratio`` and then flat to within ``plateau_growth``
    over a whole chunk).  The last matters for singular limits: past the
    floor the underlying model grows ever stiffer and chasing the nominal
    thresholds would cost unbounded work for no extra information.

    Integration proceeds in chunks whose arc length is capped so that no
    chunk travels more than about one log-unit, keeping the post-saturation
    overshoot bounded.  Running out the ``tau_max`` arc budget is not a
    boundary; model breakdown yields a partial trace marked ``failure``.
    """
    theta0 = np.asarray(start.theta, dtype=float)
    v0 = np.asarray(start.velocity, dtype=float)
    n = theta0.size
    names = tuple(param_names) if param_names is not None else tuple(f"p{i}" for i in range(n))
    v0n = np.linalg.norm(v0)
    if v0n == 0.0:
        # no motion: the trace sits at the start point for the whole budget
        taus = np.array([0.0, tau_max])
        return GeodesicTrace(taus, np.tile(theta0, (2, 1)), np.tile(v0, (2, 1)),
                             "max_tau", names)

    # rescale: s = tau / T, w = v * T with T = 1/|v0|; Gamma[w, w] is bilinear
    # so the T factors cancel and every integrated quantity is order one
    T = 1.0 / v0n
    s_max = tau_max / T

    budget = {"left": 0}

    def rhs(s, y):
        if budget["left"] <= 0:
            raise _ChunkStalled()
        budget["left"] -= 1
        theta, w = y[:n], y[n:]
        return np.concatenate([w, -contraction_for_map(f, theta, w, jac_step, dir_step)])

    def ev_velocity(s, y):
        return np.linalg.norm(y[n:]) - vel_ratio
    ev_velocity.terminal = True

    def ev_logbound(s, y):
        return np.max(np.abs(y[:n])) - log_bound
    ev_logbound.terminal = True

    ss = [np.array([0.0])]
    ys = [np.concatenate([theta0, v0 * T])[None, :]]
    reason = "max_tau"
    detail = ""
    s_now = 0.0
    y_now = ys[0][0]
    ds_base = s_max / 20.0
    first_step = None
    while s_now < s_max:
        w_norm = np.linalg.norm(y_now[n:])
        ds = min(ds_base, 1.0 / max(w_norm, 1.0), s_max - s_now)
        budget["left"] = _CHUNK_EVAL_BUDGET
        stalled = False
        try:
            sol = solve_ivp(rhs, (s_now, s_now + ds), y_now, method="RK45",
                            rtol=rtol, atol=atol, max_step=ds,
                            first_step=None if first_step is None
                            else min(first_step, 0.5 * ds),
                            events=[ev_velocity, ev_logbound])
        except _ChunkStalled:
            # near-degenerate metric: the solver stops converging because the
            # acceleration is dominated by differencing noise, so the chunk
            # burns its evaluation budget without advancing
            stalled = True
            sol = None
        except (SolverError, FloatingPointError) as exc:
            reason, detail = "failure", str(exc)
            break
        if stalled:
            if w_norm >= plateau_ratio:
                reason = "boundary"
                detail = "velocity growth stalled against the metric floor"
            else:
                reason, detail = "failure", "geodesic stalled before any blow-up"
            break
        if len(sol.t) > 1:
            ss.append(sol.t[1:])
            ys.append(sol.y[:, 1:].T)
            first_step = float(np.diff(sol.t)[-1])
        if sol.status == 1:
            reason, detail = "boundary", "threshold event"
            break
        if sol.status < 0:
            reason, detail = "failure", sol.message or ""
            break
        w_end = np.linalg.norm(sol.y[n:, -1])
        if (w_end >= plateau_ratio
                and w_end - w_norm <= plateau_growth * w_end):
            reason, detail = "boundary", "velocity saturated at the metric floor"
            break
        s_now = sol.t[-1]
        y_now = sol.y[:, -1]

    s_all = np.concatenate(ss)
    y_all = np.vstack(ys)
    taus = s_all * T
    thetas = y_all[:, :n]
    velocities = y_all[:, n:] / T
    keep = np.concatenate([[True], np.diff(taus) > 0])
    return GeodesicTrace(taus[keep], thetas[keep], velocities[keep], reason, names, detail)


def _asymptote_tau(trace: GeodesicTrace) -> float:
    """Locate the vertical asymptote by extrapolating 1/|v| to zero.

    The metric floor eventually freezes the velocity growth, so the fit uses
    only the strictly rising part of the speed profile.
    """
    speeds = trace.speed_norms()
    v0 = speeds[0]
    i_peak = int(np.argmax(speeds))
    v_peak = speeds[i_peak]
    rising = [i for i in range(i_peak + 1)
              if 2.0 * v0 <= speeds[i] <= 0.9 * v_peak]
    if len(rising) < 3 or v_peak < 5.0 * v0:
        return float(trace.taus[-1])
    idx = rising[-12:]
    x = trace.taus[idx]
    y = 1.0 / speeds[idx]
    b, a = np.polyfit(x, y, 1)
    if b >= 0:
        return float(trace.taus[-1])
    tau_b = -a / b
    lo, hi = float(trace.taus[idx[-1]]), float(trace.taus[-1])
    return float(min(max(tau_b, lo), hi))


def diagnose_boundary(trace: GeodesicTrace) -> BoundaryDiagnosis:
    """Name the boundary limit from the terminal behavior of a geodesic.

    The terminal velocity decides the limit even when the initial direction
    mixes several parameters and rotates along the way.
    """
    if trace.terminated != "boundary":
        raise DomainError(f"trace did not reach a boundary (reason: {trace.terminated})")
    v_end = trace.velocities[-1]
    k = int(np.argmax(np.abs(v_end)))
    alignment = float(np.abs(v_end[k]) / np.linalg.norm(v_end))
    direction = "to_zero" if v_end[k] < 0 else "to_infinity"
    return BoundaryDiagnosis(trace.param_names[k], direction, _asymptote_tau(trace), alignment)


def mbam_step(flags: LimitFlags = LimitFlags(), grid: ObservationGrid = DEFAULT_GRID, *,
              p: IndependentParams | None = None, iq_form: str = IQ_STANDARD,
              vel_ratio: float = 1e3, log_bound: float = 25.0,
              rtol: float = 1e-6) -> tuple[BoundaryDiagnosis, LimitFlags, GeodesicTrace]:
    """One reduction step: sloppiest geodesic of the flagged model, diagnosed.

    Returns the boundary diagnosis, the augmented flag set, and the trace.
    A diagnosis that does not match the next limit of the supported chain
    raises :class:`ChainDivergenceError` rather than being silently accepted.
    """
    if flags.count() >= len(LIMIT_CHAIN):
        raise DomainError("no reduction limits remain")
    if p is None:
        p = IndependentParams.nominal()
    f = generator_map(flags, grid, iq_form=iq_form)
    active = flags.active_params()
    theta0 = np.log([getattr(p, nm) for nm in active])
    J = central_difference_jacobian(f, theta0, JAC_STEP)
    spec = spectrum(fim(J), active)
    lam_min = float(spec.eigenvalues[-1])
    tau_max = 10.0 * math.sqrt(lam_min)
    v0 = sloppiest_direction(spec.eigenvalues, spec.eigenvectors)
    trace = trace_geodesic(f, GeodesicState(theta0, v0), tau_max=tau_max,
                           vel_ratio=vel_ratio, log_bound=log_bound, rtol=rtol,
                           param_names=active)
    if trace.terminated == "max_tau":
        # unhelpful sign convention: try the opposite orientation
        trace = trace_geodesic(f, GeodesicState(theta0, -v0), tau_max=tau_max,
                               vel_ratio=vel_ratio, log_bound=log_bound, rtol=rtol,
                               param_names=active)
    if trace.terminated != "boundary":
        raise SolverError(f"geodesic did not reach a boundary ({trace.terminated}: {trace.detail})")
    diag = diagnose_boundary(trace)
    next_flag = LIMIT_CHAIN[flags.count()]
    expected_param = LIMIT_REMOVES[next_flag]
    if diag.limit_param != expected_param or diag.direction != "to_zero":
        raise ChainDivergenceError(
            f"diagnosed limit {diag.limit_param} {diag.direction} diverges from the "
            f"supported chain (expected {expected_param} to_zero)", diagnosis=diag)
    return diag, flags.with_next(), trace


def mbam_chain(grid: ObservationGrid = DEFAULT_GRID, *, iq_form: str = IQ_STANDARD,
               n_steps: int = len(LIMIT_CHAIN),
               collect_traces: bool = False) -> list[dict]:
    """Run consecutive reduction steps from the full model; returns stage reports."""
    flags = LimitFlags()
    out = []
    for _ in range(n_steps):
        n_before = len(flags.active_params())
        t0 = time.monotonic()
        diag, flags, trace = mbam_step(flags, grid, iq_form=iq_form)
        entry = {
            "from_params": n_before,
            "to_params": n_before - 1,
            "limit_param": diag.limit_param,
            "direction": diag.direction,
            "tau_boundary": diag.tau_boundary,
            "velocity_alignment": diag.velocity_alignment,
            "wall_clock_s": round(time.monotonic() - t0, 3),
        }
        if collect_traces:
            entry["trace"] = trace
        out.append(entry)
    return out
