"""Closed-form TV flow solutions used as benchmarks.

Calibrable sets ``E`` shrink linearly in height at the rate
``lambda_E = perimeter / area``: ``2 / r`` for a disk of radius ``r``,
``2 / (R - r)`` for a ring ``r < |x| < R`` and ``1 / r`` for the interval
``[c - r, c + r]``.  Characteristic functions take the value of the closed
set on its boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

KINDS = ("single_ball", "three_balls", "annulus", "monotone_1d")


def ball_rate(radius: float, dim: int = 2) -> float:
    """``P(B) / |B|`` for a ball (dim 2) or symmetric interval (dim 1)."""
    return 2.0 / radius if dim == 2 else 1.0 / radius


def _dist(x, center):
    x = np.atleast_2d(x)
    return np.sqrt(((x - np.asarray(center, dtype=float)[None, :]) ** 2).sum(axis=1))


@dataclass(frozen=True)
class ExactSolution:
    """A benchmark solution ``u(x, t)`` on ``Omega x [0, T]``.

    ``params`` depend on the kind:

    - ``single_ball``: ``center``, ``radius``, ``height``
    - ``three_balls``: ``centers``, ``radii``, ``heights``
    - ``annulus``: ``M``, ``R``, ``r``, ``center``
    - ``monotone_1d``: ``breakpoint`` (stationary ramp ``max(x - b, 0)``)
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown exact solution {self.kind!r}")

    @property
    def discontinuous(self) -> bool:
        return self.kind != "monotone_1d"

    @property
    def dim(self) -> int:
        if self.kind == "monotone_1d":
            return 1
        if self.kind == "three_balls":
            return len(self.params["centers"][0])
        return len(self.params.get("center", (0.0, 0.0)))

    def __call__(self, x, t: float) -> np.ndarray:
        return exact_eval(self, x, t)

    def initial(self):
        """Callable suitable for :func:`tvflow.mesh.lagrange_interpolate`."""
        return lambda x: exact_eval(self, x, 0.0)

    @property
    def extinction_time(self) -> float:
        p = self.params
        if self.kind == "single_ball":
            return abs(p.get("height", 1.0)) / ball_rate(p["radius"], self.dim)
        if self.kind == "three_balls":
            return max(abs(hh) / ball_rate(r, self.dim)
                       for r, hh in zip(p["radii"], p.get("heights", [1.0] * len(p["radii"]))))
        if self.kind == "annulus":
            T1, m = annulus_merge(p["M"], p["R"], p["r"])
            return T1 + abs(m) / ball_rate(p["R"])
        return math.inf


def annulus_merge(M: float, R: float, r: float) -> Tuple[float, float]:
    """Merge time ``T1 = |M| / (lambda_ring + lambda_disk)`` and plateau height ``m``."""
    lam_ring = 2.0 / (R - r)
    lam_disk = 2.0 / r
    T1 = abs(M) / (lam_ring + lam_disk)
    return T1, math.copysign(lam_disk * T1, M)


def _ball_profile(x, t, center, radius, height, dim):
    inside = _dist(x, center) <= radius
    amp = math.copysign(max(abs(height) - ball_rate(radius, dim) * t, 0.0), height)
    return amp * inside


def exact_eval(sol: ExactSolution, x, t: float) -> np.ndarray:
    """Evaluate ``sol`` at the points ``x`` (shape ``(n, dim)``) and time ``t``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if sol.dim == 1 else x[None, :]
    p = sol.params
    if sol.kind == "single_ball":
        return _ball_profile(x, t, p["center"], p["radius"], p.get("height", 1.0), sol.dim)
    if sol.kind == "three_balls":
        heights = p.get("heights", [1.0] * len(p["radii"]))
        out = np.zeros(len(x))
        for c, r, hh in zip(p["centers"], p["radii"], heights):
            out += _ball_profile(x, t, c, r, hh, sol.dim)
        return out
    if sol.kind == "annulus":
        M, R, r = p["M"], p["R"], p["r"]
        rad = _dist(x, p.get("center", (0.0, 0.0)))
        T1, m = annulus_merge(M, R, r)
        lam_ring = 2.0 / (R - r)
        lam_disk = 2.0 / r
        out = np.zeros(len(x))
        if t < T1:
            ring = (rad >= r) & (rad <= R)
            disk = rad < r
            out[ring] = math.copysign(max(abs(M) - lam_ring * t, 0.0), M)
            out[disk] = math.copysign(lam_disk * t, M)
        else:
            # merged plateau on B(0, R) decays at the rate of the full disk
            out[rad <= R] = math.copysign(max(abs(m) - ball_rate(R) * (t - T1), 0.0), m)
        return out
    b = p.get("breakpoint", 0.5)
    return np.maximum(x[:, 0] - b, 0.0)


def single_ball(radius=1.0, center=(0.0, 0.0), height=1.0) -> ExactSolution:
    return ExactSolution("single_ball", dict(center=tuple(center), radius=radius, height=height))


def three_balls(radius=0.2, side=1.0, center=(0.0, 0.0)) -> ExactSolution:
    """Three equal disks centred on the vertices of an equilateral triangle."""
    cx, cy = center
    circum = side / math.sqrt(3.0)
    centers = tuple((cx + circum * math.cos(a), cy + circum * math.sin(a))
                    for a in (math.pi / 2, math.pi / 2 + 2 * math.pi / 3,
                              math.pi / 2 + 4 * math.pi / 3))
    return ExactSolution("three_balls", dict(centers=centers, radii=(radius,) * 3,
                                             heights=(1.0,) * 3))


def annulus(M=4.0, R=0.5, r=0.25, center=(0.0, 0.0)) -> ExactSolution:
    return ExactSolution("annulus", dict(M=M, R=R, r=r, center=tuple(center)))


def monotone_ramp(breakpoint=0.5) -> ExactSolution:
    return ExactSolution("monotone_1d", dict(breakpoint=breakpoint))
