"""Quasi-adiabatic weight W(t) and its Fourier data.

Conventions used throughout the package:

    W_hat(k) = (2 pi)^{-1/2} int W(t) exp(+i k t) dt
    w(omega) = int W(t) exp(i omega t) dt = sqrt(2 pi) W_hat(omega)

The switch profile rho_hat vanishes at k = 0 and equals one for |k| >= g, so
that i sqrt(2 pi) W_hat(k) = 1/k beyond the gap and w(omega) = -i/omega there.
With tau_t(A) = exp(iHt) A exp(-iHt), the filtered operator
int W(t) tau_t(A) dt has matrix elements A_mn w(E_m - E_n) in the energy basis.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import sici

SQRT2PI = np.sqrt(2.0 * np.pi)


class FilterError(ValueError):
    pass


@dataclass(frozen=True)
class SwitchProfile:
    """Even switch rho_hat(k) = S(|k|/g) with S(0) = 0 and S(x >= 1) = 1.

    kind "smoothstep": S = psi(x) / (psi(x) + psi(1 - x)), psi(x) = exp(-a / x^beta).
    This is C-infinity on the whole line, so W decays faster than any power.
    kind "bump": S = exp(1 - 1/(1 - (1 - x)^2)). Only C^1 at x = 1, kept as a
    reference profile that verify_filter rejects.
    kind "zero": S = 0, degenerate; rejected by build_filter.
    """

    kind: str = "smoothstep"
    a: float = 0.5
    beta: float = 2.0

    def value(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        if self.kind == "zero":
            return np.zeros_like(x)
        out = np.ones_like(x)
        inside = x < 1.0
        xi = x[inside]
        if self.kind == "smoothstep":
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                # 1/(1 + exp(phi)) is the stable form of psi(x)/(psi(x)+psi(1-x))
                phi = self.a / np.maximum(xi, 1e-300) ** self.beta - self.a / (1.0 - xi) ** self.beta
                out[inside] = np.where(xi > 0, 0.5 * (1.0 - np.tanh(0.5 * phi)), 0.0)
        elif self.kind == "bump":
            with np.errstate(divide="ignore", over="ignore"):
                den = 1.0 - (1.0 - xi) ** 2
                out[inside] = np.where(den > 0, np.exp(1.0 - 1.0 / np.maximum(den, 1e-300)), 0.0)
        else:
            raise FilterError(f"unknown switch profile kind {self.kind!r}")
        return out

    def derivative(self, x):
        """dS/dx for x >= 0 (zero outside (0, 1))."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = (x > 0) & (x < 1)
        xi = x[inside]
        if self.kind == "smoothstep":
            s = self.value(xi)
            dphi = -self.a * self.beta * (xi ** (-self.beta - 1) + (1.0 - xi) ** (-self.beta - 1))
            out[inside] = -s * (1.0 - s) * dphi
        elif self.kind == "bump":
            den = 1.0 - (1.0 - xi) ** 2
            out[inside] = self.value(xi) * (-2.0 * (1.0 - xi)) / den**2
        return out

    def to_json(self):
        return {"kind": self.kind, "a": self.a, "beta": self.beta}

    def digest(self):
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FilterFunction:
    gap: float
    profile: SwitchProfile = field(default_factory=SwitchProfile)
    horizon: float = 0.0  # T; 0 means 200/g
    n_grid: int = 2**16
    n_quad: int = 800

    @property
    def T(self):
        return self.horizon if self.horizon > 0 else 200.0 / self.gap

    def rho_hat(self, k):
        return self.profile.value(np.asarray(k, dtype=float) / self.gap)

    def w_hat(self, k):
        """Fourier data W_hat(k) = rho_hat(k) / (i sqrt(2 pi) k), zero at k = 0."""
        k = np.asarray(k, dtype=float)
        r = self.rho_hat(k)
        # rho_hat vanishes near 0, so mask there rather than divide by a tiny k
        zero = r == 0
        safe = np.where(zero, 1.0, k)
        return np.where(zero, 0.0, r / (1j * SQRT2PI * safe))

    def w(self, omega):
        """Spectral multiplier w(omega) = int W(t) e^{i omega t} dt."""
        return SQRT2PI * self.w_hat(omega)

    def W(self, t):
        """Time kernel, accurate to ~1e-16 absolute, also far in the tail.

        For t > 0, W(t) = (1/pi) int_0^g u'(k) (pi/2 - Si(k t)) dk with u = 1 - rho_hat.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k, wk = _nodes(self.n_quad, self.gap)
        du = -self.profile.derivative(k / self.gap) / self.gap
        si, _ = sici(np.outer(np.abs(t), k))
        vals = ((np.pi / 2 - si) * (du * wk)).sum(axis=1) / np.pi
        return np.sign(t) * vals

    def time_grid(self):
        """Uniform samples of W on [-T, T] with n_grid intervals (cached)."""
        return _cached_grid(self)

    def key(self):
        return {
            "g": self.gap,
            "profile": self.profile.digest(),
            "T": self.T,
            "grid": self.n_grid,
        }


def _nodes(n, g):
    x, wx = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) * g / 2.0, wx * g / 2.0


def _grid_values(F: FilterFunction):
    # sin-form: W(t) = -sign(t)/2 + (1/pi) int_0^g u(k) sin(kt)/k dk; same
    # function as F.W, evaluated faster on the dense grid
    t = np.linspace(-F.T, F.T, F.n_grid + 1)
    half = F.n_grid // 2
    tp = t[half + 1 :]
    k, wk = _nodes(400, F.gap)
    u = 1.0 - F.rho_hat(k)
    vals = np.empty_like(tp)
    for lo in range(0, tp.size, 4096):
        chunk = tp[lo : lo + 4096]
        vals[lo : lo + 4096] = -0.5 + (np.sin(np.outer(chunk, k)) @ (u * wk / k)) / np.pi
    W = np.zeros_like(t)
    W[half + 1 :] = vals
    W[:half] = -vals[::-1]
    return t, W


_MEMO: dict = {}


def _cached_grid(F: FilterFunction):
    key = json.dumps(F.key(), sort_keys=True)
    if key in _MEMO:
        return _MEMO[key]
    path = None
    root = os.environ.get("LATTICE_HALL_CACHE")
    if root:
        digest = hashlib.sha256(key.encode()).hexdigest()[:24]
        path = Path(root) / f"filter_{digest}.npz"
        if path.exists():
            with np.load(path) as data:
                _MEMO[key] = (data["t"], data["W"])
                return _MEMO[key]
    t, W = _grid_values(F)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, t=t, W=W)
    _MEMO[key] = (t, W)
    return t, W


def build_filter(g, profile=None, **kw):
    if not g > 0:
        raise FilterError("gap g must be positive")
    profile = profile or SwitchProfile()
    F = FilterFunction(gap=float(g), profile=profile, **kw)
    probe = np.linspace(0.0, 3.0, 601)
    vals = profile.value(probe)
    if not np.all(vals[probe >= 1.0] == 1.0):
        raise FilterError("switch profile is not identically one beyond the gap")
    if vals[0] != 0.0:
        raise FilterError("switch profile must vanish at k = 0")
    if np.any(vals < 0) or np.any(vals > 1):
        raise FilterError("switch profile leaves [0, 1]")
    return F


def w_hat_time_kernel(F: FilterFunction, omega):
    return F.w(omega)


def w_from_time_samples(F: FilterFunction, omega):
    """int_{-T}^{T} W(t) e^{i omega t} dt from the sampled grid (Simpson on [0, T])."""
    t, W = F.time_grid()
    half = F.n_grid // 2
    tp, Wp = t[half:].copy(), W[half:].copy()
    Wp[0] = -0.5  # right limit; the integrand W sin vanishes there anyway
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    h = tp[1] - tp[0]
    coef = np.ones(tp.size)
    coef[1:-1:2] = 4.0
    coef[2:-1:2] = 2.0
    out = np.empty(omega.size, dtype=complex)
    for i, om in enumerate(omega):
        out[i] = 2j * (h / 3.0) * np.dot(coef, Wp * np.sin(om * tp))
    return out


@dataclass
class FilterReport:
    fourier_residual: float
    fourier_tol: float
    tail_slope: float
    tail_constant: float
    tail_powers: dict
    envelope_at_T: float
    reality: float
    spectral_time_residual: float
    spectral_time_tol: float
    passed: bool

    def to_json(self):
        return dict(self.__dict__)


def verify_filter(F: FilterFunction, fourier_tol=1e-10, decay_power=8, spectral_time_tol=1e-6, seed=0):
    g = F.gap
    k = np.concatenate([np.linspace(g, 20 * g, 4001), -np.linspace(g, 20 * g, 4001)])
    fourier = float(np.max(np.abs(1j * SQRT2PI * F.w_hat(k) - 1.0 / k)))

    t = np.linspace(50.0 / g, 200.0 / g, 601)
    env = np.maximum.accumulate(np.abs(F.W(t))[::-1])[::-1]
    env = np.maximum(env, 1e-300)
    slope = float(np.polyfit(np.log(t), np.log(env), 1)[0])
    powers = {str(p): bool(slope <= -p) for p in (2, 4, 8)}
    const = float(np.max(env * t**decay_power))

    tg, Wg = F.time_grid()
    # reality: the grid is real by construction; W_hat must be odd and imaginary
    kk = np.linspace(-5 * g, 5 * g, 1001)
    wh = F.w_hat(kk)
    reality = float(max(np.max(np.abs(wh.real)), np.max(np.abs(wh + F.w_hat(-kk)))))

    rng = np.random.default_rng(seed)
    om = np.concatenate([rng.uniform(-4 * g, 4 * g, 12), [2 * g, -2 * g, 0.3 * g]])
    st = float(np.max(np.abs(w_from_time_samples(F, om) - F.w(om))))

    passed = (
        fourier <= fourier_tol
        and slope <= -decay_power
        and st <= spectral_time_tol
        and reality <= 1e-12
        and float(np.max(np.abs(F.rho_hat(kk)))) > 0
    )
    return FilterReport(
        fourier_residual=fourier,
        fourier_tol=fourier_tol,
        tail_slope=slope,
        tail_constant=const,
        tail_powers=powers,
        envelope_at_T=float(env[-1]),
        reality=reality,
        spectral_time_residual=st,
        spectral_time_tol=spectral_time_tol,
        passed=bool(passed),
    )
