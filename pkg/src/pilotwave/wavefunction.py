"""Perturbed 2-D harmonic oscillator wave functions and the guidance velocity field.

Units are hbar = m = omega = 1 throughout, so the eigenenergies of the
product states phi_m(q1) phi_n(q2) are the integers m + n + 1 and every
superposition treated here is exactly periodic with period T = 2*pi.

The wave function is the oscillator ground state plus a superposition of
low excited states with amplitudes epsilon_mn in [0, 1] and fixed initial
phases theta_mn:

    psi(q1, q2, t) = N * sum_k a_k exp(i * (theta_k - E_k t)) phi_mk(q1) phi_nk(q2)

with a_00 = 1.  Configurations move with the velocity field
v_r = Im(d_r psi / psi), which is singular on the nodal set of psi; the
evaluation here refuses to divide by densities below a configurable guard
instead of returning infinities.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
PERIOD = TWO_PI

_PI_QUARTER = math.pi ** -0.25  # phi_0(0)

# Unnormalized Hermite recurrence overflows double range near order ~300;
# the guard stays far below that so every intermediate is exact-friendly.
MAX_ORDER = 60

# Velocity evaluations fail below this |psi|^2, expressed as a fraction of
# the ground-state peak 1/pi.
NODE_GUARD = 1e-12 / math.pi


class PilotWaveError(Exception):
    """Base class for numerical failures raised by this package."""


class UnsupportedOrderError(PilotWaveError, ValueError):
    """Eigenstate order above the overflow guard."""


class NodeProximityError(PilotWaveError):
    """Velocity requested too close to a node of psi."""

    def __init__(self, q1: float, q2: float, t: float, density: float):
        self.q1 = q1
        self.q2 = q2
        self.t = t
        self.density = density
        super().__init__(
            f"|psi|^2 = {density:.3e} below node guard at "
            f"q = ({q1:.6f}, {q2:.6f}), t = {t:.6f}"
        )


class Mode(NamedTuple):
    """Quantum numbers (m, n) of the product eigenstate phi_m(q1) phi_n(q2)."""

    m: int
    n: int

    @property
    def energy(self) -> int:
        return self.m + self.n + 1


FOUR_MODES: tuple[Mode, ...] = (Mode(0, 0), Mode(0, 1), Mode(1, 0), Mode(1, 1))
FIVE_MODES: tuple[Mode, ...] = (
    Mode(0, 0),
    Mode(0, 1),
    Mode(0, 2),
    Mode(1, 0),
    Mode(1, 1),
    Mode(2, 0),
)


def _check_order(m: int) -> None:
    if not isinstance(m, (int, np.integer)) or m < 0:
        raise ValueError(f"eigenstate order must be a non-negative integer, got {m!r}")
    if m > MAX_ORDER:
        raise UnsupportedOrderError(f"order {m} exceeds supported maximum {MAX_ORDER}")


def hermite(m: int, x: float) -> float:
    """Physicists' Hermite polynomial H_m(x) by the three-term recurrence."""
    _check_order(m)
    if m == 0:
        return 1.0
    h_prev = 1.0
    h = 2.0 * x
    for k in range(1, m):
        h, h_prev = 2.0 * x * h - 2.0 * k * h_prev, h
    return h


def eigenstate(m: int, q: float) -> float:
    """Normalized 1-D oscillator eigenfunction phi_m(q).

    Uses the normalized recurrence
    phi_{k+1} = sqrt(2/(k+1)) q phi_k - sqrt(k/(k+1)) phi_{k-1}
    so no factorial or 2^m is ever formed.
    """
    _check_order(m)
    phi = _PI_QUARTER * math.exp(-0.5 * q * q)
    if m == 0:
        return phi
    phi_prev = phi
    phi = math.sqrt(2.0) * q * phi
    for k in range(1, m):
        phi, phi_prev = (
            math.sqrt(2.0 / (k + 1)) * q * phi - math.sqrt(k / (k + 1)) * phi_prev,
            phi,
        )
    return phi


def eigenstate_derivative(m: int, q: float) -> float:
    """d phi_m / dq via the ladder identity sqrt(2m) phi_{m-1} - q phi_m."""
    _check_order(m)
    if m == 0:
        return -q * eigenstate(0, q)
    return math.sqrt(2.0 * m) * eigenstate(m - 1, q) - q * eigenstate(m, q)


def eigenstate_ladder(kmax: int, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """phi_0..phi_kmax and their derivatives on an array of positions.

    Returns two arrays of shape (kmax + 1,) + q.shape.
    """
    _check_order(kmax)
    q = np.asarray(q, dtype=float)
    phi = np.empty((kmax + 1,) + q.shape)
    phi[0] = _PI_QUARTER * np.exp(-0.5 * q * q)
    if kmax >= 1:
        phi[1] = math.sqrt(2.0) * q * phi[0]
    for k in range(1, kmax):
        phi[k + 1] = (
            math.sqrt(2.0 / (k + 1)) * q * phi[k] - math.sqrt(k / (k + 1)) * phi[k - 1]
        )
    dphi = np.empty_like(phi)
    dphi[0] = -q * phi[0]
    for k in range(1, kmax + 1):
        dphi[k] = math.sqrt(2.0 * k) * phi[k - 1] - q * phi[k]
    return phi, dphi


def _format_floats(values: Iterable[float]) -> str:
    return " ".join(f"{v:.12g}" for v in values)


@dataclass(frozen=True)
class WaveFunctionSpec:
    """Mode set, amplitudes and phases; fully determines psi(q1, q2, t).

    ``terms`` is an ordered tuple of (Mode, amplitude, phase).  The ground
    term (0, 0) must be present with amplitude exactly 1; the only exception
    is a spec consisting of a single eigenstate (used for stationarity
    checks), whose one term may carry any mode.  Phases are reduced to
    [0, 2*pi) on construction.
    """

    terms: tuple[tuple[Mode, float, float], ...]

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValueError("spec needs at least one term")
        canonical = []
        seen = set()
        for mode, amp, theta in self.terms:
            mode = Mode(int(mode[0]), int(mode[1]))
            _check_order(mode.m)
            _check_order(mode.n)
            if mode in seen:
                raise ValueError(f"duplicate mode {mode}")
            seen.add(mode)
            amp = float(amp)
            if not 0.0 <= amp <= 1.0:
                raise ValueError(f"amplitude {amp} for mode {mode} outside [0, 1]")
            theta = math.fmod(float(theta), TWO_PI)
            if theta < 0.0:
                theta += TWO_PI
            canonical.append((mode, amp, theta))
        if len(canonical) > 1 or canonical[0][0] == Mode(0, 0):
            ground = [term for term in canonical if term[0] == Mode(0, 0)]
            if not ground:
                raise ValueError("spec must contain the ground mode (0, 0)")
            if ground[0][1] != 1.0:
                raise ValueError("ground-mode amplitude must be exactly 1")
        elif canonical[0][1] != 1.0:
            raise ValueError("single-eigenstate amplitude must be exactly 1")
        total = sum(amp * amp for _, amp, _ in canonical)
        if not (math.isfinite(total) and total > 0.0):
            raise ValueError("normalization is not finite and positive")
        object.__setattr__(self, "terms", tuple(canonical))

    # -- constructors ------------------------------------------------------

    @classmethod
    def ground(cls, theta: float = 0.0) -> "WaveFunctionSpec":
        """Unperturbed ground state (the epsilon = 0 limit)."""
        return cls(((Mode(0, 0), 1.0, theta),))

    @classmethod
    def single_eigenstate(cls, m: int, n: int, theta: float = 0.0) -> "WaveFunctionSpec":
        return cls(((Mode(m, n), 1.0, theta),))

    @classmethod
    def homogeneous(
        cls,
        epsilon: float,
        phases: Mapping[Mode, float],
        modes: Sequence[Mode] = FOUR_MODES,
    ) -> "WaveFunctionSpec":
        """Ground state plus equal-amplitude perturbations on the given modes.

        With epsilon = 0 the excited terms are dropped entirely.
        """
        return cls.from_amplitudes(
            {Mode(*mode): epsilon for mode in modes if Mode(*mode) != Mode(0, 0)},
            phases,
        )

    @classmethod
    def from_amplitudes(
        cls,
        epsilons: Mapping[Mode, float],
        phases: Mapping[Mode, float],
    ) -> "WaveFunctionSpec":
        """Ground state plus the given per-mode perturbation amplitudes."""
        phases = {Mode(*k): float(v) for k, v in phases.items()}
        terms = [(Mode(0, 0), 1.0, phases.get(Mode(0, 0), 0.0))]
        for mode in sorted(Mode(*k) for k in epsilons):
            if mode == Mode(0, 0):
                continue
            eps = float(epsilons[mode])
            if eps == 0.0:
                continue
            if mode not in phases:
                raise ValueError(f"no phase given for mode {mode}")
            terms.append((mode, eps, phases[mode]))
        return cls(tuple(terms))

    # -- derived quantities ------------------------------------------------

    @property
    def normalization(self) -> float:
        """N = (sum of squared amplitudes)^(-1/2)."""
        return 1.0 / math.sqrt(sum(amp * amp for _, amp, _ in self.terms))

    @property
    def modes(self) -> tuple[Mode, ...]:
        return tuple(mode for mode, _, _ in self.terms)

    @property
    def max_order(self) -> tuple[int, int]:
        return (
            max(mode.m for mode, _, _ in self.terms),
            max(mode.n for mode, _, _ in self.terms),
        )

    # -- serialization -----------------------------------------------------

    def to_text(self) -> str:
        """Canonical key-value form, 12 significant digits."""
        lines = [
            "modes = " + " ".join(f"{mode.m},{mode.n}" for mode, _, _ in self.terms),
            "epsilon = " + _format_floats(amp for _, amp, _ in self.terms),
            "theta = " + _format_floats(theta for _, _, theta in self.terms),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "WaveFunctionSpec":
        fields: dict[str, list[str]] = {}
        for line in text.splitlines():
            line = line.strip().lstrip("#").strip()
            if not line or "=" not in line:
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.split()
        try:
            modes = [Mode(*(int(p) for p in item.split(","))) for item in fields["modes"]]
            eps = [float(v) for v in fields["epsilon"]]
            theta = [float(v) for v in fields["theta"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed wave-function spec text: {exc}") from exc
        if not len(modes) == len(eps) == len(theta):
            raise ValueError("modes, epsilon and theta have different lengths")
        return cls(tuple(zip(modes, eps, theta)))

    def fingerprint(self) -> str:
        """sha256 digest of the canonical serialization."""
        return hashlib.sha256(self.to_text().encode()).hexdigest()


# -- compiled evaluation core ---------------------------------------------
#
# The velocity numerator and |psi|^2 are accumulated pairwise:
#
#   Im(d_r psi conj(psi)) = sum_{j<k} a_j a_k sin(alpha_j - alpha_k)
#                           (G_j F_k - G_k F_j)
#   |psi|^2 / N^2         = sum_j a_j^2 F_j^2
#                           + 2 sum_{j<k} a_j a_k cos(alpha_j - alpha_k) F_j F_k
#
# with F the product eigenfunction and G its gradient component.  The phase
# differences alpha_j - alpha_k = (theta_j - theta_k) - dE t involve only the
# integer energy gaps dE, so one sin/cos of t serves every pair via angle
# addition.  The form makes a single-eigenstate spec literally stationary
# (no pairs, numerator identically 0.0) and velocity exactly independent of a
# global phase shift and of the normalization.


class _Compiled(NamedTuple):
    ms: tuple[int, ...]
    ns: tuple[int, ...]
    amps: tuple[float, ...]
    pairs: tuple[tuple[int, int, float, int, float, float], ...]  # j, k, a_j a_k, dE, sin/cos dtheta
    kmax1: int
    kmax2: int
    max_de: int
    norm2: float


@lru_cache(maxsize=64)
def _compile(spec: WaveFunctionSpec) -> _Compiled:
    ms = tuple(mode.m for mode, _, _ in spec.terms)
    ns = tuple(mode.n for mode, _, _ in spec.terms)
    amps = tuple(amp for _, amp, _ in spec.terms)
    energies = [mode.energy for mode, _, _ in spec.terms]
    thetas = [theta for _, _, theta in spec.terms]
    pairs = []
    for j in range(len(ms)):
        for k in range(j + 1, len(ms)):
            dtheta = thetas[j] - thetas[k]
            pairs.append(
                (
                    j,
                    k,
                    amps[j] * amps[k],
                    energies[j] - energies[k],
                    math.sin(dtheta),
                    math.cos(dtheta),
                )
            )
    max_de = max((abs(p[3]) for p in pairs), default=0)
    norm = spec.normalization
    return _Compiled(ms, ns, amps, tuple(pairs), max(ms), max(ns), max_de, norm * norm)


def _sincos_multiples(st: float, ct: float, kmax: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """sin(k t), cos(k t) for k = 0..kmax from sin(t), cos(t)."""
    s = [0.0, st]
    c = [1.0, ct]
    for _ in range(1, kmax):
        s.append(s[-1] * ct + c[-1] * st)
        c.append(c[-1] * ct - s[-2] * st)
    return tuple(s[: kmax + 1]), tuple(c[: kmax + 1])


def _flow_terms(comp: _Compiled, q1: float, q2: float, t: float):
    """Velocity numerators and unnormalized density at one phase-space point."""
    tm = math.fmod(t, TWO_PI)
    st = math.sin(tm)
    ct = math.cos(tm)
    sk, ck = _sincos_multiples(st, ct, comp.max_de)

    phi1 = [_PI_QUARTER * math.exp(-0.5 * q1 * q1)]
    for k in range(comp.kmax1):
        nxt = math.sqrt(2.0 / (k + 1)) * q1 * phi1[k]
        if k:
            nxt -= math.sqrt(k / (k + 1)) * phi1[k - 1]
        phi1.append(nxt)
    dphi1 = [-q1 * phi1[0]]
    for k in range(1, comp.kmax1 + 1):
        dphi1.append(math.sqrt(2.0 * k) * phi1[k - 1] - q1 * phi1[k])

    phi2 = [_PI_QUARTER * math.exp(-0.5 * q2 * q2)]
    for k in range(comp.kmax2):
        nxt = math.sqrt(2.0 / (k + 1)) * q2 * phi2[k]
        if k:
            nxt -= math.sqrt(k / (k + 1)) * phi2[k - 1]
        phi2.append(nxt)
    dphi2 = [-q2 * phi2[0]]
    for k in range(1, comp.kmax2 + 1):
        dphi2.append(math.sqrt(2.0 * k) * phi2[k - 1] - q2 * phi2[k])

    ms = comp.ms
    ns = comp.ns
    amps = comp.amps
    F = [phi1[ms[i]] * phi2[ns[i]] for i in range(len(ms))]
    G1 = [dphi1[ms[i]] * phi2[ns[i]] for i in range(len(ms))]
    G2 = [phi1[ms[i]] * dphi2[ns[i]] for i in range(len(ms))]

    rho = 0.0
    for i in range(len(ms)):
        rho += amps[i] * amps[i] * F[i] * F[i]
    num1 = 0.0
    num2 = 0.0
    for j, k, a, de, sdt, cdt in comp.pairs:
        if de >= 0:
            se, ce = sk[de], ck[de]
        else:
            se, ce = -sk[-de], ck[-de]
        # sin/cos of (theta_j - theta_k) - dE*t by angle addition
        sjk = sdt * ce - cdt * se
        cjk = cdt * ce + sdt * se
        fj, fk = F[j], F[k]
        rho += 2.0 * a * cjk * fj * fk
        num1 += a * sjk * (G1[j] * fk - G1[k] * fj)
        num2 += a * sjk * (G2[j] * fk - G2[k] * fj)
    return num1, num2, rho


def psi(spec: WaveFunctionSpec, q1: float, q2: float, t: float) -> complex:
    """psi(q1, q2, t) = N sum_k a_k exp(i(theta_k - E_k t)) phi_m(q1) phi_n(q2)."""
    tm = math.fmod(t, TWO_PI)
    total = 0j
    for mode, amp, theta in spec.terms:
        alpha = theta - mode.energy * tm
        total += (
            amp
            * complex(math.cos(alpha), math.sin(alpha))
            * eigenstate(mode.m, q1)
            * eigenstate(mode.n, q2)
        )
    return spec.normalization * total


def grad_psi(spec: WaveFunctionSpec, q1: float, q2: float, t: float) -> tuple[complex, complex]:
    """(d psi / d q1, d psi / d q2), term-wise via the derivative ladder."""
    tm = math.fmod(t, TWO_PI)
    d1 = 0j
    d2 = 0j
    for mode, amp, theta in spec.terms:
        alpha = theta - mode.energy * tm
        coeff = amp * complex(math.cos(alpha), math.sin(alpha))
        f1, f2 = eigenstate(mode.m, q1), eigenstate(mode.n, q2)
        d1 += coeff * eigenstate_derivative(mode.m, q1) * f2
        d2 += coeff * f1 * eigenstate_derivative(mode.n, q2)
    norm = spec.normalization
    return norm * d1, norm * d2


def born_density(spec: WaveFunctionSpec, q1: float, q2: float, t: float) -> float:
    """|psi(q1, q2, t)|^2."""
    comp = _compile(spec)
    _, _, rho = _flow_terms(comp, q1, q2, t)
    return comp.norm2 * rho


def velocity(
    spec: WaveFunctionSpec,
    q1: float,
    q2: float,
    t: float,
    node_guard: float = NODE_GUARD,
) -> tuple[float, float]:
    """Guidance velocity (Im(d1 psi / psi), Im(d2 psi / psi)).

    Raises NodeProximityError when |psi|^2 falls below ``node_guard``.
    """
    comp = _compile(spec)
    num1, num2, rho = _flow_terms(comp, q1, q2, t)
    if comp.norm2 * rho < node_guard:
        raise NodeProximityError(q1, q2, t, comp.norm2 * rho)
    return num1 / rho, num2 / rho


# -- vectorized evaluation (ensembles, grids) -------------------------------


def flow_batch(
    spec: WaveFunctionSpec,
    q1: np.ndarray,
    q2: np.ndarray,
    t: np.ndarray | float,
):
    """Velocity components and |psi|^2 on arrays of points.

    ``t`` may be a scalar or an array matching q1/q2.  No node guard is
    applied here; callers inspect the returned density.  Lanes are fully
    independent, so the arithmetic per lane matches the scalar evaluation.
    """
    comp = _compile(spec)
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    tm = np.mod(np.asarray(t, dtype=float), TWO_PI)
    st = np.sin(tm)
    ct = np.cos(tm)
    sk: list = [np.zeros_like(st), st]
    ck: list = [np.ones_like(ct), ct]
    for _ in range(1, comp.max_de):
        sk.append(sk[-1] * ct + ck[-1] * st)
        ck.append(ck[-1] * ct - sk[-2] * st)

    phi1, dphi1 = eigenstate_ladder(comp.kmax1, q1)
    phi2, dphi2 = eigenstate_ladder(comp.kmax2, q2)

    ms, ns, amps = comp.ms, comp.ns, comp.amps
    F = [phi1[ms[i]] * phi2[ns[i]] for i in range(len(ms))]
    G1 = [dphi1[ms[i]] * phi2[ns[i]] for i in range(len(ms))]
    G2 = [phi1[ms[i]] * dphi2[ns[i]] for i in range(len(ms))]

    rho = amps[0] * amps[0] * F[0] * F[0]
    for i in range(1, len(ms)):
        rho = rho + amps[i] * amps[i] * F[i] * F[i]
    num1 = np.zeros_like(rho)
    num2 = np.zeros_like(rho)
    for j, k, a, de, sdt, cdt in comp.pairs:
        if de >= 0:
            se, ce = sk[de], ck[de]
        else:
            se, ce = -sk[-de], ck[-de]
        sjk = sdt * ce - cdt * se
        cjk = cdt * ce + sdt * se
        rho = rho + (2.0 * a) * cjk * F[j] * F[k]
        num1 += (a * sjk) * (G1[j] * F[k] - G1[k] * F[j])
        num2 += (a * sjk) * (G2[j] * F[k] - G2[k] * F[j])
    density = comp.norm2 * rho
    safe = np.where(rho > 0.0, rho, 1.0)
    return num1 / safe, num2 / safe, density


def born_density_grid(
    spec: WaveFunctionSpec,
    x: np.ndarray,
    y: np.ndarray,
    t: float,
) -> np.ndarray:
    """|psi|^2 on the tensor grid (len(y), len(x)); rows follow y."""
    comp = _compile(spec)
    phi_x, _ = eigenstate_ladder(comp.kmax1, np.asarray(x, dtype=float))
    phi_y, _ = eigenstate_ladder(comp.kmax2, np.asarray(y, dtype=float))
    tm = math.fmod(t, TWO_PI)
    total = np.zeros((len(y), len(x)), dtype=complex)
    for mode, amp, theta in spec.terms:
        alpha = theta - mode.energy * tm
        total += (amp * complex(math.cos(alpha), math.sin(alpha))) * np.outer(
            phi_y[mode.n], phi_x[mode.m]
        )
    return comp.norm2 * (total.real ** 2 + total.imag ** 2)


def time_averaged_density_grid(
    spec: WaveFunctionSpec,
    x: np.ndarray,
    y: np.ndarray,
    samples: int = 100,
) -> np.ndarray:
    """One-period time average of |psi|^2 on the tensor grid."""
    acc = np.zeros((len(y), len(x)))
    for j in range(samples):
        acc += born_density_grid(spec, x, y, TWO_PI * j / samples)
    return acc / samples


def marginal_density(spec: WaveFunctionSpec, x: np.ndarray, t: float, axis: int = 0) -> np.ndarray:
    """Exact marginal of |psi|^2 along one axis.

    Orthonormality of the other axis collapses the integral to
    sum_n |sum_m c_mn phi_m(x)|^2 (axis = 0) and symmetrically for axis = 1.
    """
    comp = _compile(spec)
    x = np.asarray(x, dtype=float)
    tm = math.fmod(t, TWO_PI)
    kmax = comp.kmax1 if axis == 0 else comp.kmax2
    phi, _ = eigenstate_ladder(kmax, x)
    other = {}
    for mode, amp, theta in spec.terms:
        alpha = theta - mode.energy * tm
        coeff = amp * complex(math.cos(alpha), math.sin(alpha))
        own, rest = (mode.m, mode.n) if axis == 0 else (mode.n, mode.m)
        other.setdefault(rest, []).append((own, coeff))
    out = np.zeros_like(x)
    for _, entries in sorted(other.items()):
        g = np.zeros(x.shape, dtype=complex)
        for own, coeff in entries:
            g += coeff * phi[own]
        out += np.abs(g) ** 2
    return out * comp.norm2
