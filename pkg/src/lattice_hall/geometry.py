"""Lattice windows, regions, cones and the l-infinity metric on Z^2."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

Site = tuple


def linf_dist(x, y):
    return max(abs(x[0] - y[0]), abs(x[1] - y[1]))


def set_dist(X, Y):
    """l-infinity distance between two finite site sets (inf if one is empty)."""
    if not X or not Y:
        return math.inf
    a = np.asarray(sorted(X))
    b = np.asarray(sorted(Y))
    return int(np.min(np.max(np.abs(a[:, None, :] - b[None, :, :]), axis=2)))


def diam(S):
    if len(S) <= 1:
        return 0
    a = np.asarray(list(S))
    return int(max(np.ptp(a[:, 0]), np.ptp(a[:, 1])))


@dataclass(frozen=True)
class LatticeWindow:
    """Rectangular window [x0, x1] x [y0, y1] of Z^2.

    LatticeWindow(N) is the square [-N, N]^2. Rectangles such as the 3 x 4
    window x in [-1, 1], y in [-2, 1] come from LatticeWindow.rect.
    """

    half_width: int = 1
    x_range: tuple = None
    y_range: tuple = None

    def __post_init__(self):
        if self.x_range is None:
            if self.half_width < 1:
                raise ValueError("half_width must be >= 1")
            object.__setattr__(self, "x_range", (-self.half_width, self.half_width))
            object.__setattr__(self, "y_range", (-self.half_width, self.half_width))
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        if not (x0 <= 0 <= x1 and y0 <= 0 <= y1):
            raise ValueError("window must contain the origin")

    @classmethod
    def rect(cls, x_range, y_range):
        return cls(half_width=0, x_range=tuple(x_range), y_range=tuple(y_range))

    @property
    def sites(self):
        (x0, x1), (y0, y1) = self.x_range, self.y_range
        return tuple((x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1))

    @property
    def n_sites(self):
        (x0, x1), (y0, y1) = self.x_range, self.y_range
        return (x1 - x0 + 1) * (y1 - y0 + 1)

    @property
    def diameter(self):
        (x0, x1), (y0, y1) = self.x_range, self.y_range
        return max(x1 - x0, y1 - y0)

    def __contains__(self, x):
        return self.x_range[0] <= x[0] <= self.x_range[1] and self.y_range[0] <= x[1] <= self.y_range[1]

    def to_json(self):
        return {"x_range": list(self.x_range), "y_range": list(self.y_range)}

    @classmethod
    def from_json(cls, d):
        if "half_width" in d:
            return cls(int(d["half_width"]))
        return cls.rect(d["x_range"], d["y_range"])


@dataclass(frozen=True)
class Region:
    """A subset of Z^2 given by a membership predicate; realized inside windows."""

    name: str
    predicate: Callable = field(compare=False, repr=False)

    def __contains__(self, x):
        return bool(self.predicate(x))

    def realize(self, window: LatticeWindow):
        return frozenset(x for x in window.sites if self.predicate(x))

    def complement(self):
        p = self.predicate
        name = self.name[1:] if self.name.startswith("~") else "~" + self.name
        return Region(name, lambda x: not p(x))

    def __or__(self, other):
        p, q = self.predicate, other.predicate
        return Region(f"({self.name}|{other.name})", lambda x: p(x) or q(x))

    def __and__(self, other):
        p, q = self.predicate, other.predicate
        return Region(f"({self.name}&{other.name})", lambda x: p(x) and q(x))

    def to_json(self):
        return {"name": self.name}


def finite_region(name, sites: Iterable):
    s = frozenset(tuple(x) for x in sites)
    return Region(name, lambda x: tuple(x) in s)


A = Region("A", lambda x: x[0] >= 0 and x[1] >= 0)
B = Region("B", lambda x: x[0] <= -1 and x[1] >= 0)
C = Region("C", lambda x: x[0] <= -1 and x[1] <= -1)
D = Region("D", lambda x: x[0] >= 0 and x[1] <= -1)
AB = Region("AB", lambda x: x[1] >= 0)
AD = Region("AD", lambda x: x[0] >= 0)
CD = Region("CD", lambda x: x[1] <= -1)
BC = Region("BC", lambda x: x[0] <= -1)
EVERYTHING = Region("Z2", lambda x: True)
NAMED = {r.name: r for r in (A, B, C, D, AB, AD, CD, BC, EVERYTHING)}


def boundary(region: Region, r: int, window: LatticeWindow):
    """Sites within distance r of both the region and its complement.

    Window-relative: both sets are intersected with the window first, so a
    region covering the whole window has an empty boundary.
    """
    if r < 1:
        raise ValueError("interaction range r must be >= 1")
    inside = region.realize(window)
    outside = frozenset(window.sites) - inside
    if not inside or not outside:
        return finite_region(f"d{region.name}", ())
    pts = []
    for x in window.sites:
        near_in = any(linf_dist(x, y) <= r for y in inside)
        near_out = any(linf_dist(x, y) <= r for y in outside)
        if near_in and near_out:
            pts.append(x)
    return finite_region(f"d{region.name}", pts)


ANGLE_SLACK = 1e-12


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


@dataclass(frozen=True)
class Cone:
    """Open cone {a + t e_beta : t > 0, |beta - theta| < phi}; the apex is excluded."""

    apex: tuple = (0.0, 0.0)
    axis_angle: float = math.pi / 2
    half_aperture: float = math.pi / 8

    def __post_init__(self):
        if not (0 < self.half_aperture < math.pi):
            raise ValueError("half_aperture must lie strictly inside (0, pi)")
        object.__setattr__(self, "apex", (float(self.apex[0]), float(self.apex[1])))

    @property
    def axis(self):
        return np.array([math.cos(self.axis_angle), math.sin(self.axis_angle)])

    def contains(self, x):
        dx, dy = x[0] - self.apex[0], x[1] - self.apex[1]
        if dx == 0 and dy == 0:
            return False
        off = abs(_wrap(math.atan2(dy, dx) - self.axis_angle))
        return off < self.half_aperture - ANGLE_SLACK

    def __contains__(self, x):
        return self.contains(x)

    def shifted(self, s):
        e = self.axis
        return Cone((self.apex[0] + s * e[0], self.apex[1] + s * e[1]), self.axis_angle, self.half_aperture)

    def region(self):
        return Region(f"cone({self.apex},{self.axis_angle:.4f},{self.half_aperture:.4f})", self.contains)

    def avoids_forbidden_direction(self):
        """[theta - phi, theta + phi] must miss [3pi/2 - pi/4, 3pi/2 + pi/4]."""
        centre = 3 * math.pi / 2
        gap = abs(_wrap(self.axis_angle - centre))
        return gap > self.half_aperture + math.pi / 4

    def to_json(self):
        return {"apex": list(self.apex), "axis_angle": self.axis_angle, "half_aperture": self.half_aperture}

    @classmethod
    def from_json(cls, d):
        return cls(tuple(d["apex"]), float(d["axis_angle"]), float(d["half_aperture"]))


LAMBDA0 = Cone((0, 0), math.pi / 2, 5 * math.pi / 8)
LAMBDA1 = Cone((0, 0), math.pi / 2, math.pi / 8)
LAMBDA2 = Cone((0, 0), math.pi, math.pi / 8)
LAMBDA3 = Cone((0, 0), 0.0, math.pi / 8)


QUADRANT_CORNER = (-0.5, -0.5)


def halfplane_of_cone(c: Cone):
    """Half-plane with inward normal f, f the axis direction rotated clockwise by 90 degrees.

    The boundary line runs through the quadrant corner (-1/2, -1/2), so the
    axis angles pi/2, pi and 0 give exactly AD, AB and CD on the lattice.
    """
    th = c.axis_angle - math.pi / 2
    f = (round(math.cos(th), 12), round(math.sin(th), 12))
    cx, cy = QUADRANT_CORNER
    names = {(1.0, 0.0): "AD", (0.0, 1.0): "AB", (0.0, -1.0): "CD", (-1.0, 0.0): "BC"}
    name = names.get((f[0] + 0.0, f[1] + 0.0), f"H({f[0]:+.3f},{f[1]:+.3f})")
    return Region(name, lambda x: f[0] * (x[0] - cx) + f[1] * (x[1] - cy) > 1e-12)


@dataclass(frozen=True)
class DecayFunction:
    """f(r) = C exp(-a r^b), strictly positive and superpolynomially decaying.

    Monotonicity is recorded as a flag, not enforced as a type invariant.
    """

    C: float = 1.0
    a: float = 1.0
    b: float = 0.5
    family: str = "stretched_exp"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.C * np.exp(-self.a * np.power(np.maximum(r, 0.0), self.b))

    @property
    def non_increasing(self):
        return self.C > 0 and self.a >= 0 and self.b >= 0

    def superpolynomial(self, powers=(1, 2, 4, 8), r_max=1e6):
        """f(r) r^p must end the test range far below its peak and still falling."""
        r = np.unique(np.logspace(0, np.log10(r_max), 4000).astype(int)).astype(float)
        out = {}
        for p in powers:
            # log-space avoids underflow of f(r) far out
            logv = np.log(self.C) - self.a * r**self.b + p * np.log(r)
            out[p] = bool(logv[-1] <= logv.max() + np.log(1e-6) and logv[-1] < logv[-2])
        return out

    def to_json(self):
        return {"family": self.family, "C": self.C, "a": self.a, "b": self.b}

    @classmethod
    def from_json(cls, d):
        return cls(float(d.get("C", 1.0)), float(d.get("a", 1.0)), float(d.get("b", 0.5)))


DEFAULT_DECAY = DecayFunction()
