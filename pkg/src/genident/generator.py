"""Infinite-bus synchronous generator: dynamics, reduction limits, observation.

The machine is a sixth-order two-axis model swinging against an ideal bus of
fixed voltage magnitude and angle.  States are the rotor angle ``delta`` (rad),
per-unit rotor speed ``omega``, and the four internal EMFs ``eq1`` (e'_q),
``ed1`` (e'_d), ``eq2`` (e''_q), ``ed2`` (e''_d).  The stator algebra is
explicit, so after substitution the model is a plain ODE.

A chain of five singular/regular limits (damping -> 0, inertia -> 0, the two
subtransient time constants -> 0, and x_d -> x_q) reduces the model one
parameter at a time; each limit is realized here as a flag on the full model
rather than a separately coded equation set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, SolverError

__all__ = [
    "Constants",
    "IndependentParams",
    "BareParams",
    "StateVector",
    "AlgebraicVars",
    "LimitFlags",
    "Trajectory",
    "ObservationGrid",
    "PARAM_NAMES",
    "STATE_NAMES",
    "LIMIT_CHAIN",
    "DEFAULT_CONSTANTS",
    "independent_to_bare",
    "bare_to_independent",
    "algebraic_eval",
    "rhs",
    "integrate",
    "integrate_batch",
    "observe",
    "solve_power_angle",
]

# Independent parameter order used everywhere (column order of sensitivity
# matrices, CSV headers, JSON keys).  dx5 = x''_q - x''_d is pinned at zero and
# excluded from the varied set.
PARAM_NAMES = ("H", "D", "dx1", "dx2", "dx3", "dx4", "xdpp", "dTd", "dTq", "Tdpp", "Tqpp")

STATE_NAMES = ("delta", "omega", "eq1", "ed1", "eq2", "ed2")

#: Reduction-chain order; each limit was derived on the model with all previous
#: limits applied, so a valid flag set is a prefix of this sequence.
LIMIT_CHAIN = ("d_zero", "h_zero", "tdpp_zero", "tqpp_zero", "dx1_zero")

#: Parameter removed from the varied set by each limit.
LIMIT_REMOVES = {
    "d_zero": "D",
    "h_zero": "H",
    "tdpp_zero": "Tdpp",
    "tqpp_zero": "Tqpp",
    "dx1_zero": "dx1",
}

IQ_STANDARD = "standard"
IQ_AS_PRINTED = "as-printed"


@dataclass(frozen=True)
class Constants:
    """Fixed quantities of the infinite-bus configuration (per-unit system).

    ``omega_b`` is the base angular frequency in rad/s; rotor speed itself is
    per-unit, so the reference speed ``omega_0`` is 1.
    """

    omega_b: float = 120.0 * math.pi
    v_f0: float = 4.2
    P_m: float = 0.7
    V: float = 1.09
    vartheta: float = 0.0
    omega_0: float = 1.0

    def __post_init__(self):
        for name in ("omega_b", "v_f0", "P_m", "V", "omega_0"):
            if getattr(self, name) <= 0:
                raise DomainError(f"constant {name} must be positive")


DEFAULT_CONSTANTS = Constants()


@dataclass(frozen=True)
class IndependentParams:
    """The 11 independently variable, non-negative machine parameters.

    The reactance increments ``dx1..dx4`` and time-constant increments
    ``dTd, dTq`` encode the physical ordering constraints on the bare
    reactances and open-circuit time constants, so any non-negative vector
    here maps to an admissible machine.
    """

    H: float = 2.53
    D: float = 0.5
    dx1: float = 0.12
    dx2: float = 2.02
    dx3: float = 1.932
    dx4: float = 0.448
    xdpp: float = 0.48
    dTd: float = 4.69
    dTq: float = 1.29
    Tdpp: float = 0.06
    Tqpp: float = 0.21

    def __post_init__(self):
        for name in PARAM_NAMES:
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise DomainError(f"independent parameter {name} must be >= 0, got {v!r}")

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "IndependentParams":
        a = np.asarray(a, dtype=float)
        if a.shape != (len(PARAM_NAMES),):
            raise DomainError(f"expected {len(PARAM_NAMES)} parameters, got shape {a.shape}")
        return cls(**{n: float(v) for n, v in zip(PARAM_NAMES, a)})

    @classmethod
    def nominal(cls) -> "IndependentParams":
        return cls()


@dataclass(frozen=True)
class BareParams:
    """Machine parameters in their physical (ordering-constrained) form."""

    H: float
    D: float
    x_d: float
    x_q: float
    x_q1: float  # x'_q
    x_d1: float  # x'_d
    x_q2: float  # x''_q
    x_d2: float  # x''_d
    T_d01: float  # T'_d0
    T_d02: float  # T''_d0
    T_q01: float  # T'_q0
    T_q02: float  # T''_q0

    def ordering_satisfied(self, tol: float = 1e-12) -> bool:
        chain = (self.x_d, self.x_q, self.x_q1, self.x_d1, self.x_q2, self.x_d2, 0.0)
        react_ok = all(a >= b - tol for a, b in zip(chain, chain[1:]))
        t_ok = self.T_d01 >= self.T_d02 - tol >= -tol and self.T_q01 >= self.T_q02 - tol >= -tol
        return react_ok and t_ok


def independent_to_bare(p: IndependentParams) -> BareParams:
    """Accumulate the increment parameters into the physical reactance chain.

    The result satisfies x_d >= x_q >= x'_q >= x'_d >= x''_q >= x''_d >= 0 and
    the time-constant orderings by construction.
    """
    x_q2 = p.xdpp  # dx5 = 0, so x''_q == x''_d
    x_d1 = x_q2 + p.dx4
    x_q1 = x_d1 + p.dx3
    x_q = x_q1 + p.dx2
    x_d = x_q + p.dx1
    return BareParams(
        H=p.H, D=p.D,
        x_d=x_d, x_q=x_q, x_q1=x_q1, x_d1=x_d1, x_q2=x_q2, x_d2=p.xdpp,
        T_d01=p.Tdpp + p.dTd, T_d02=p.Tdpp,
        T_q01=p.Tqpp + p.dTq, T_q02=p.Tqpp,
    )


def bare_to_independent(b: BareParams) -> IndependentParams:
    """Inverse of :func:`independent_to_bare` by successive differencing."""
    return IndependentParams(
        H=b.H, D=b.D,
        dx1=b.x_d - b.x_q, dx2=b.x_q - b.x_q1, dx3=b.x_q1 - b.x_d1,
        dx4=b.x_d1 - b.x_q2, xdpp=b.x_d2,
        dTd=b.T_d01 - b.T_d02, dTq=b.T_q01 - b.T_q02,
        Tdpp=b.T_d02, Tqpp=b.T_q02,
    )


@dataclass(frozen=True)
class StateVector:
    """Full model state; defaults are the post-disturbance initial data."""

    delta: float = 0.5
    omega: float = 0.98
    eq1: float = 2.13
    ed1: float = 0.02
    eq2: float = 1.93
    ed2: float = 0.02

    def to_array(self) -> np.ndarray:
        return np.array([self.delta, self.omega, self.eq1, self.ed1, self.eq2, self.ed2])

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "StateVector":
        a = np.asarray(a, dtype=float)
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class AlgebraicVars:
    v_d: float
    v_q: float
    i_d: float
    i_q: float
    P_g: float


@dataclass(frozen=True)
class LimitFlags:
    """Active reduction limits; must form a prefix of :data:`LIMIT_CHAIN`."""

    d_zero: bool = False
    h_zero: bool = False
    tdpp_zero: bool = False
    tqpp_zero: bool = False
    dx1_zero: bool = False

    def __post_init__(self):
        seq = [getattr(self, name) for name in LIMIT_CHAIN]
        if any(seq[i] and not all(seq[:i]) for i in range(len(seq))):
            raise DomainError(
                f"limit flags must be a prefix of the chain {LIMIT_CHAIN}; got {self}"
            )

    @classmethod
    def none(cls) -> "LimitFlags":
        return cls()

    @classmethod
    def all(cls) -> "LimitFlags":
        return cls(True, True, True, True, True)

    @classmethod
    def first(cls, n: int) -> "LimitFlags":
        if not 0 <= n <= len(LIMIT_CHAIN):
            raise DomainError(f"chain prefix length must be in [0, {len(LIMIT_CHAIN)}]")
        return cls(**{name: i < n for i, name in enumerate(LIMIT_CHAIN)})

    def count(self) -> int:
        return sum(getattr(self, name) for name in LIMIT_CHAIN)

    def with_next(self) -> "LimitFlags":
        n = self.count()
        if n >= len(LIMIT_CHAIN):
            raise DomainError("all limits already applied")
        return LimitFlags.first(n + 1)

    def active_params(self) -> tuple[str, ...]:
        """Parameter names still varied once the flagged limits are applied."""
        removed = {LIMIT_REMOVES[name] for name in LIMIT_CHAIN if getattr(self, name)}
        return tuple(n for n in PARAM_NAMES if n not in removed)

    def dynamic_states(self) -> tuple[str, ...]:
        """State components that remain differential under these limits."""
        if not self.h_zero:
            return STATE_NAMES
        names = ["eq1", "ed1"]
        if not self.tdpp_zero:
            names.append("eq2")
        if not self.tqpp_zero:
            names.append("ed2")
        return tuple(names)


@dataclass(frozen=True)
class ObservationGrid:
    """Uniform sampling grid over the late, near-equilibrium window."""

    t_start: float = 3.0
    t_end: float = 5.0
    dt: float = 0.02
    observed_states: tuple[str, ...] = STATE_NAMES

    def __post_init__(self):
        if not (self.t_start < self.t_end and self.dt > 0):
            raise DomainError("grid requires t_start < t_end and dt > 0")
        unknown = set(self.observed_states) - set(STATE_NAMES)
        if unknown:
            raise DomainError(f"unknown observed states {sorted(unknown)}")

    def times(self) -> np.ndarray:
        n = int(math.floor((self.t_end - self.t_start) / self.dt + 1e-9)) + 1
        return self.t_start + self.dt * np.arange(n)

    def size(self) -> int:
        return len(self.times()) * len(self.observed_states)


DEFAULT_GRID = ObservationGrid()


# ---------------------------------------------------------------------------
# algebraic block
# ---------------------------------------------------------------------------

def _currents(delta, eq2, ed2, b: dict, c: Constants, iq_form: str):
    """Stator algebra for array-valued inputs; returns (v_d, v_q, i_d, i_q, P_g)."""
    v_d = c.V * np.sin(delta - c.vartheta)
    v_q = c.V * np.cos(delta - c.vartheta)
    i_d = (eq2 - v_q) / b["x_d2"]
    if iq_form == IQ_AS_PRINTED:
        i_q = (v_d - eq2) / b["x_q2"]
    else:
        i_q = (v_d - ed2) / b["x_q2"]
    P_g = v_d * i_d + v_q * i_q
    return v_d, v_q, i_d, i_q, P_g


def algebraic_eval(s: StateVector, b: BareParams, c: Constants = DEFAULT_CONSTANTS,
                   iq_form: str = IQ_STANDARD) -> AlgebraicVars:
    """Evaluate the stator algebraic block at one state.

    ``iq_form`` selects the quadrature-current expression: ``"standard"`` uses
    the subtransient EMF e''_d (this reproduces the reference spectra);
    ``"as-printed"`` lets i_q depend on e''_q instead.
    """
    if b.x_d2 == 0 or b.x_q2 == 0:
        raise ZeroDivisionError("subtransient reactances must be nonzero")
    if b.x_d2 < 0 or b.x_q2 < 0:
        raise DomainError("subtransient reactances must be positive")
    bd = {"x_d2": b.x_d2, "x_q2": b.x_q2}
    v_d, v_q, i_d, i_q, P_g = _currents(s.delta, s.eq2, s.ed2, bd, c, iq_form)
    return AlgebraicVars(float(v_d), float(v_q), float(i_d), float(i_q), float(P_g))


# ---------------------------------------------------------------------------
# vectorized model family
# ---------------------------------------------------------------------------

def _bare_arrays(ps: np.ndarray, flags: LimitFlags) -> dict:
    """Bare-parameter arrays for a (n_sets, 11) block, with limits substituted.

    Flagged limits override the supplied values: D drops out, x_d is pinned to
    x_q under dx1_zero; H, Tdpp, Tqpp disappear from the equations wherever
    their limit flag is set.
    """
    H, D, dx1, dx2, dx3, dx4, xdpp, dTd, dTq, Tdpp, Tqpp = ps.T
    if flags.dx1_zero:
        dx1 = np.zeros_like(dx1)
    x_q2 = xdpp
    x_d1 = x_q2 + dx4
    x_q1 = x_d1 + dx3
    x_q = x_q1 + dx2
    x_d = x_q + dx1
    return {
        "H": H, "D": np.zeros_like(D) if flags.d_zero else D,
        "x_d": x_d, "x_q": x_q, "x_q1": x_q1, "x_d1": x_d1,
        "x_q2": x_q2, "x_d2": xdpp,
        "T_d01": Tdpp + dTd, "T_d02": Tdpp,
        "T_q01": Tqpp + dTq, "T_q02": Tqpp,
    }


def _full_rhs(t, y, b, n, c, iq_form):
    """Right-hand side of the sixth-order model, vectorized over n parameter sets."""
    s = y.reshape(n, 6)
    delta, omega, eq1, ed1, eq2, ed2 = s.T
    v_d, v_q, i_d, i_q, P_g = _currents(delta, eq2, ed2, b, c, iq_form)
    out = np.empty_like(s)
    out[:, 0] = c.omega_b * (omega - c.omega_0)
    acc = c.P_m - P_g
    if not np.all(b["D"] == 0):
        acc = acc - b["D"] * (omega - c.omega_0)
    out[:, 1] = acc / b["H"]
    out[:, 2] = (-eq1 - (b["x_d"] - b["x_d1"]) * i_d + c.v_f0) / b["T_d01"]
    out[:, 3] = (-ed1 + (b["x_q"] - b["x_q1"]) * i_q) / b["T_q01"]
    out[:, 4] = (-eq2 + eq1 - (b["x_d1"] - b["x_d2"]) * i_d) / b["T_d02"]
    out[:, 5] = (-ed2 + ed1 + (b["x_q1"] - b["x_q2"]) * i_q) / b["T_q02"]
    return out.ravel()


def _slaved_eq2(eq1, v_q, b):
    # e''_q = e'_q - (x'_d - x''_d) i_d closed under i_d = (e''_q - v_q)/x''_d
    return (b["x_d2"] * eq1 + (b["x_d1"] - b["x_d2"]) * v_q) / b["x_d1"]


def _slaved_ed2(ed1, v_d, b, iq_form: str):
    if iq_form == IQ_AS_PRINTED:
        # printed i_q has no e''_d dependence, so the slaving is explicit
        return None  # computed from i_q afterwards
    # e''_d = e'_d + (x'_q - x''_q) i_q closed under i_q = (v_d - e''_d)/x''_q
    return (b["x_q2"] * ed1 + (b["x_q1"] - b["x_q2"]) * v_d) / b["x_q1"]


def _reduced_algebra(delta, st: dict, b, c, flags: LimitFlags, iq_form: str):
    """Currents and EMFs of an h_zero model at given rotor angle(s).

    ``st`` holds the dynamic states; slaved EMFs are reconstructed in place.
    Returns (v_d, v_q, i_d, i_q, P_g, eq2, ed2).
    """
    v_d = c.V * np.sin(delta - c.vartheta)
    v_q = c.V * np.cos(delta - c.vartheta)
    eq2 = _slaved_eq2(st["eq1"], v_q, b) if flags.tdpp_zero else st["eq2"]
    i_d = (eq2 - v_q) / b["x_d2"]
    if iq_form == IQ_AS_PRINTED:
        i_q = (v_d - eq2) / b["x_q2"]
        ed2 = st["ed1"] + (b["x_q1"] - b["x_q2"]) * i_q if flags.tqpp_zero else st["ed2"]
    else:
        ed2 = _slaved_ed2(st["ed1"], v_d, b, iq_form) if flags.tqpp_zero else st["ed2"]
        i_q = (v_d - ed2) / b["x_q2"]
    P_g = v_d * i_d + v_q * i_q
    return v_d, v_q, i_d, i_q, P_g, eq2, ed2


def solve_power_angle(st: dict, b, c: Constants, flags: LimitFlags, iq_form: str,
                      guess=None, tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
    """Rotor angle(s) satisfying the power balance P_g(delta) = P_m.

    Safeguarded Newton with a bisection fallback on the operating branch
    delta in (vartheta, vartheta + pi/2), warm-started from ``guess``.
    Fully vectorized: the state arrays may carry any shape (parameter sets,
    or parameter sets x time nodes), broadcast against the bare arrays.
    """
    shape = np.broadcast_shapes(np.shape(st["eq1"]), np.shape(b["x_d2"]))
    lo = np.full(shape, c.vartheta + 1e-12)
    hi = np.full(shape, c.vartheta + math.pi / 2 - 1e-12)

    def residual(delta):
        return _reduced_algebra(delta, st, b, c, flags, iq_form)[4] - c.P_m

    r_lo, r_hi = residual(lo), residual(hi)
    if np.any(r_lo * r_hi > 0):
        bad = float(np.min(np.minimum(np.abs(r_lo), np.abs(r_hi))[r_lo * r_hi > 0]))
        raise SolverError("power balance has no root on the operating branch",
                          residual=bad)
    delta = np.clip(np.full(shape, 0.8) if guess is None
                    else np.broadcast_to(np.asarray(guess, dtype=float), shape).copy(),
                    lo, hi)
    r = residual(delta)
    for _ in range(max_iter):
        conv = np.abs(r) < tol
        if np.all(conv):
            return delta
        # keep the bracket current
        neg = r < 0
        lo = np.where(neg, delta, lo)
        hi = np.where(neg, hi, delta)
        h = 1e-8
        dr = (residual(delta + h) - residual(delta - h)) / (2 * h)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dr != 0, r / dr, np.inf)
        cand = delta - step
        inside = (cand > lo) & (cand < hi) & np.isfinite(cand)
        cand = np.where(inside, cand, 0.5 * (lo + hi))
        delta = np.where(conv, delta, cand)
        r = residual(delta)
    raise SolverError("power-angle Newton failed to converge",
                      residual=float(np.max(np.abs(r))))


def rhs(s: StateVector | Sequence[float], p: IndependentParams, flags: LimitFlags = LimitFlags(),
        c: Constants = DEFAULT_CONSTANTS, iq_form: str = IQ_STANDARD):
    """State derivative and algebraic residuals at one state.

    For models without the inertia limit this returns the six-component
    derivative of the full state.  Once ``h_zero`` is set, the rotor angle is
    algebraic and the derivative covers only the remaining EMF states (in the
    order given by ``flags.dynamic_states()``); the returned residual dict then
    reports the power-balance defect at the solved angle.
    """
    ps = p.to_array()[None, :]
    b = _bare_arrays(ps, flags)
    arr = s.to_array() if isinstance(s, StateVector) else np.asarray(s, dtype=float)
    if not flags.h_zero:
        d = _full_rhs(0.0, np.asarray(arr, dtype=float), b, 1, c, iq_form)
        _, _, _, _, P_g = _currents(arr[0], arr[4], arr[5], b, c, iq_form)
        return d, {"power_balance": float(c.P_m - P_g)}
    st = {"eq1": np.atleast_1d(arr[2]), "ed1": np.atleast_1d(arr[3]),
          "eq2": np.atleast_1d(arr[4]), "ed2": np.atleast_1d(arr[5])}
    delta = solve_power_angle(st, b, c, flags, iq_form, guess=[arr[0]] if arr[0] > 0 else None)
    v_d, v_q, i_d, i_q, P_g, eq2, ed2 = _reduced_algebra(delta, st, b, c, flags, iq_form)
    derivs = {
        "eq1": (-st["eq1"] - (b["x_d"] - b["x_d1"]) * i_d + c.v_f0) / b["T_d01"],
        "ed1": (-st["ed1"] + (b["x_q"] - b["x_q1"]) * i_q) / b["T_q01"],
        "eq2": (-eq2 + st["eq1"] - (b["x_d1"] - b["x_d2"]) * i_d) / b["T_d02"],
        "ed2": (-ed2 + st["ed1"] + (b["x_q1"] - b["x_q2"]) * i_q) / b["T_q02"],
    }
    active = flags.dynamic_states()
    out = np.array([float(derivs[k][0]) for k in active])
    return out, {"power_balance": float(P_g[0] - c.P_m)}


def _reduced_rhs_factory(b, n, c, flags: LimitFlags, iq_form: str, state_names):
    """RHS of the EMF subsystem for h_zero models, with a warm-started angle solve."""
    k = len(state_names)
    warm = {"delta": None}

    def f(t, y):
        s = y.reshape(n, k)
        st = {name: s[:, j] for j, name in enumerate(state_names)}
        if "eq2" not in st:
            st["eq2"] = None
        if "ed2" not in st:
            st["ed2"] = None
        delta = solve_power_angle(st, b, c, flags, iq_form, guess=warm["delta"])
        warm["delta"] = delta
        v_d, v_q, i_d, i_q, P_g, eq2, ed2 = _reduced_algebra(delta, st, b, c, flags, iq_form)
        out = np.empty_like(s)
        out[:, 0] = (-st["eq1"] - (b["x_d"] - b["x_d1"]) * i_d + c.v_f0) / b["T_d01"]
        out[:, 1] = (-st["ed1"] + (b["x_q"] - b["x_q1"]) * i_q) / b["T_q01"]
        j = 2
        if "eq2" in state_names:
            out[:, j] = (-eq2 + st["eq1"] - (b["x_d1"] - b["x_d2"]) * i_d) / b["T_d02"]
            j += 1
        if "ed2" in state_names:
            out[:, j] = (-ed2 + st["ed1"] + (b["x_q1"] - b["x_q2"]) * i_q) / b["T_q02"]
        return out.ravel()

    return f


@dataclass(frozen=True)
class Trajectory:
    """Dense solution of one or more parameter sets over a common time span.

    ``at(times)`` reconstructs the full six-component state for every
    parameter set, including algebraically slaved components for reduced
    models.  ``times``/``states`` hold the accepted solver steps of the first
    set, which is the common single-trajectory case.
    """

    times: np.ndarray
    states: np.ndarray  # (n_times, 6) for the first parameter set
    t_span: tuple[float, float]
    n_sets: int
    _evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def at(self, times) -> np.ndarray:
        """States at arbitrary times within the span; shape (n_sets, len(times), 6)."""
        t = np.atleast_1d(np.asarray(times, dtype=float))
        if t.size and (t.min() < self.t_span[0] - 1e-9 or t.max() > self.t_span[1] + 1e-9):
            raise DomainError(
                f"requested times outside trajectory span {self.t_span}")
        return self._evaluator(t)

    def state_at(self, t: float) -> StateVector:
        return StateVector.from_array(self.at([t])[0, 0])


# five-point centered first-derivative stencil, fourth order
_D1_STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def _fd_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order first derivative on a uniform grid (one-sided at the edges)."""
    v = np.asarray(values, dtype=float)
    n = v.shape[-1]
    if n < 5:
        raise DomainError("need at least 5 grid points for the 5-point stencil")
    d = np.empty_like(v)
    d[..., 2:-2] = (v[..., :-4] - 8 * v[..., 1:-3] + 8 * v[..., 3:-1] - v[..., 4:]) / (12 * dt)
    # fourth-order one-sided stencils at the boundary rows
    c0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
    c1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0
    d[..., 0] = v[..., :5] @ c0 / dt
    d[..., 1] = v[..., :5] @ c1 / dt
    d[..., -1] = v[..., -5:] @ -c0[::-1] / dt
    d[..., -2] = v[..., -5:] @ -c1[::-1] / dt
    return d


_FINE_DT = 1e-3  # grid used to differentiate the algebraic rotor angle


def integrate_batch(params: np.ndarray, flags: LimitFlags = LimitFlags(),
                    ics: StateVector | None = None, t_end: float = 5.0, *,
                    t_start: float = 0.0, rtol: float = 1e-7, atol: float = 1e-7,
                    c: Constants = DEFAULT_CONSTANTS, iq_form: str = IQ_STANDARD,
                    first_step: float = 1e-4, max_step: float = 0.05) -> Trajectory:
    """Integrate many parameter sets over one shared adaptive-step sequence.

    Sharing the step sequence keeps the members' integration errors strongly
    correlated, which is what makes finite-difference sensitivities of the
    observed outputs accurate well below the raw solver tolerance.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if not np.all(np.isfinite(params)) or np.any(params < 0):
        raise DomainError("parameter sets must be finite and non-negative")
    n = params.shape[0]
    if ics is None:
        ics = StateVector()
    if t_end < t_start:
        raise DomainError("t_end must be >= t_start")
    b = _bare_arrays(params, flags)
    x0 = ics.to_array()

    if t_end == t_start:
        states = np.tile(x0, (n, 1))

        def evaluator(t):
            return np.broadcast_to(states[:, None, :], (n, len(t), 6)).copy()

        return Trajectory(np.array([t_start]), states[:1].reshape(1, 6),
                          (t_start, t_end), n, evaluator)

    if not flags.h_zero:
        y0 = np.tile(x0, n)
        sol = solve_ivp(_full_rhs, (t_start, t_end), y0, method="RK45",
                        rtol=rtol, atol=atol, dense_output=True,
                        first_step=first_step, max_step=max_step,
                        args=(b, n, c, iq_form))
        if sol.status != 0:
            raise SolverError(f"integration failed: {sol.message}")

        def evaluator(t):
            return sol.sol(t).reshape(n, 6, len(t)).transpose(0, 2, 1)

        first = sol.sol(sol.t).reshape(n, 6, len(sol.t))[0].T
        return Trajectory(sol.t.copy(), first, (t_start, t_end), n, evaluator)

    # --- inertia-limit family: EMF states integrate, rotor angle is algebraic
    state_names = flags.dynamic_states()
    idx = [STATE_NAMES.index(nm) for nm in state_names]
    y0 = np.tile(x0[idx], n)
    f = _reduced_rhs_factory(b, n, c, flags, iq_form, state_names)
    sol = solve_ivp(f, (t_start, t_end), y0, method="RK45", rtol=rtol, atol=atol,
                    dense_output=True, first_step=first_step, max_step=max_step)
    if sol.status != 0:
        raise SolverError(f"integration failed: {sol.message}")

    k = len(state_names)
    b2 = {key: np.asarray(val)[:, None] for key, val in b.items()}  # broadcast over time

    def angle_and_emfs(t):
        """Solve the angle at all times at once; returns (n, m) arrays."""
        s = sol.sol(t).reshape(n, k, len(t))
        st = {name: s[:, i, :] for i, name in enumerate(state_names)}
        delta = solve_power_angle(st, b2, c, flags, iq_form)
        _, _, _, _, _, eq2, ed2 = _reduced_algebra(delta, st, b2, c, flags, iq_form)
        return st, delta, eq2, ed2

    # rotor speed comes from differentiating the solved angle path on a fixed
    # fine grid; the offset anchors omega to its supplied initial value
    n_fine = int(math.ceil((t_end - t_start) / _FINE_DT)) + 1
    t_fine = np.linspace(t_start, t_end, n_fine)
    _, delta_fine, _, _ = angle_and_emfs(t_fine)
    ddelta_fine = _fd_derivative(delta_fine, t_fine[1] - t_fine[0])
    omega_offset = ics.omega - ddelta_fine[:, 0] / c.omega_b  # (n,)

    def evaluator(t):
        st, delta, eq2, ed2 = angle_and_emfs(t)
        full = np.empty((n, len(t), 6))
        full[:, :, 0] = delta
        ddelta = np.empty((n, len(t)))
        for i in range(n):
            ddelta[i] = np.interp(t, t_fine, ddelta_fine[i])
        full[:, :, 1] = omega_offset[:, None] + ddelta / c.omega_b
        full[:, :, 2] = st["eq1"]
        full[:, :, 3] = st["ed1"]
        full[:, :, 4] = eq2
        full[:, :, 5] = ed2
        return full

    first = evaluator(sol.t)[0]
    return Trajectory(sol.t.copy(), first, (t_start, t_end), n, evaluator)


def integrate(p: IndependentParams, flags: LimitFlags = LimitFlags(),
              ics: StateVector | None = None, t_end: float = 5.0, *,
              t_start: float = 0.0, rtol: float = 1e-7, atol: float = 1e-7,
              c: Constants = DEFAULT_CONSTANTS, iq_form: str = IQ_STANDARD) -> Trajectory:
    """Integrate a single parameter set; see :func:`integrate_batch`."""
    return integrate_batch(p.to_array()[None, :], flags, ics, t_end,
                           t_start=t_start, rtol=rtol, atol=atol, c=c, iq_form=iq_form)


def observe(traj: Trajectory, grid: ObservationGrid = DEFAULT_GRID) -> np.ndarray:
    """Sample a trajectory onto the grid and stack time-major.

    Result length is n_times * n_observed_states, ordered as all observed
    states at t_1, then all at t_2, and so on.  For a batched trajectory the
    result is a (n_sets, M) matrix.
    """
    t = grid.times()
    idx = [STATE_NAMES.index(nm) for nm in grid.observed_states]
    s = traj.at(t)[:, :, idx]  # (n_sets, n_times, n_obs)
    flat = s.reshape(traj.n_sets, -1)
    return flat[0] if traj.n_sets == 1 else flat
