"""Numerical probes of the unstable and center directions.

Directions are projective: ``v`` and ``-v`` are the same direction, and all
angles are taken modulo ``pi`` (so they lie in ``[0, pi/2]``).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .certify import ConeSpec
from .errors import ExclusionFailed, PreconditionViolated
from .maps import TorusEndomorphism, eval_derivative, preimages


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _canonical(v) -> np.ndarray:
    """Representative with nonnegative first component (second if the first is zero)."""
    v = _unit(v)
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        v = -v
    return v + 0.0


def projective_angle(u, v) -> float:
    """Angle between the lines spanned by ``u`` and ``v``, in ``[0, pi/2]``."""
    u, v = np.asarray(u, float), np.asarray(v, float)
    return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), abs(u @ v))


def _boundary_rays(cone: ConeSpec) -> np.ndarray:
    s = cone.slope
    if cone.orientation == "horizontal":
        return np.array([[1.0, s], [1.0, -s]])
    return np.array([[s, 1.0], [-s, 1.0]])


def _outside(v, cone: ConeSpec, margin: float = 0.0) -> bool:
    a, b = abs(v[0]), abs(v[1])
    if cone.orientation == "horizontal":
        return b > cone.slope * a + margin * (a + b)
    return a > cone.slope * b + margin * (a + b)


@dataclass(frozen=True)
class DirectionProbe:
    base: tuple[float, float]
    direction: tuple[float, float]
    depth: int
    width: float
    branches: tuple[int, ...] = ()
    verified_steps: int = 0
    kind: str = "unstable"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "base": list(self.base), "direction": list(self.direction),
                "depth": self.depth, "width": self.width, "branches": list(self.branches),
                "verified_steps": self.verified_steps}


def pre_orbit(f: TorusEndomorphism, p, branch_choices) -> np.ndarray:
    """``p_0 = p`` and ``p_{k+1}`` = preimage number ``branch_choices[k]`` of ``p_k``.

    Indices refer to the lexicographically sorted preimage list.
    """
    pts = [np.mod(np.asarray(p, dtype=float), 1.0)]
    for b in branch_choices:
        pre = preimages(f, pts[-1])
        if not 0 <= b < len(pre):
            raise PreconditionViolated(f"branch index {b} outside 0..{len(pre) - 1}")
        pts.append(pre[b])
    return np.array(pts)


def _push_cone(f, orbit, cone):
    """Boundary rays at ``orbit[-1]`` pushed forward to ``orbit[0]``; widths after each step."""
    rays = _boundary_rays(cone)
    widths = [projective_angle(*rays)]
    for q in orbit[:0:-1]:
        rays = rays @ eval_derivative(f, q).T
        rays /= np.linalg.norm(rays, axis=1, keepdims=True)
        widths.append(projective_angle(*rays))
    return rays, widths


def _bisector(rays) -> np.ndarray:
    u, v = _unit(rays[0]), _unit(rays[1])
    if u @ v < 0:
        v = -v
    return _canonical(u + v)


def unstable_direction(f: TorusEndomorphism, p, branch_choices, depth: int | None = None,
                       cone: ConeSpec = ConeSpec()) -> DirectionProbe:
    """Bisector of ``Df^depth`` applied to the cone along a chosen pre-orbit.

    ``width`` is the angle of the image cone; when the cone field is
    invariant along the pre-orbit the true unstable direction lies inside.
    """
    branch_choices = tuple(int(b) for b in branch_choices)
    depth = len(branch_choices) if depth is None else depth
    if depth > len(branch_choices):
        raise PreconditionViolated(f"need {depth} branch choices, got {len(branch_choices)}")
    orbit = pre_orbit(f, p, branch_choices[:depth])
    rays, widths = _push_cone(f, orbit, cone)
    return DirectionProbe(tuple(map(float, orbit[0])), tuple(map(float, _bisector(rays))), depth,
                          float(widths[-1]), branch_choices[:depth])


def cone_widths(f: TorusEndomorphism, p, branch_choices, cone: ConeSpec = ConeSpec()) -> np.ndarray:
    """Image-cone widths for depth ``0..len(branch_choices)`` (shared pre-orbit)."""
    out = []
    orbit = pre_orbit(f, p, branch_choices)
    for d in range(len(orbit)):
        _, w = _push_cone(f, orbit[: d + 1], cone)
        out.append(w[-1])
    return np.array(out)


@dataclass(frozen=True)
class SpecialPHReport:
    max_deviation: float
    max_width: float
    seed: int
    probes: tuple[DirectionProbe, ...] = field(default=(), repr=False)

    @property
    def bound(self) -> float:
        """Sampled directions agree to within this angle (deviation plus residual width)."""
        return self.max_deviation + self.max_width

    def to_dict(self) -> dict:
        return {"max_deviation": self.max_deviation, "max_width": self.max_width,
                "bound": self.bound, "seed": self.seed,
                "probes": [pr.to_dict() for pr in self.probes]}


def special_ph_test(f: TorusEndomorphism, p, depth: int = 20, trials: int = 16, seed: int = 0,
                    cone: ConeSpec = ConeSpec()) -> SpecialPHReport:
    """Largest pairwise angle between unstable directions over random pre-orbits.

    Sampled evidence only: it says nothing about pre-orbits not drawn.
    """
    rng = np.random.default_rng(seed)
    k = abs(f.linear_part.det)
    probes = tuple(unstable_direction(f, p, rng.integers(0, k, size=depth), depth, cone)
                   for _ in range(trials))
    dev = 0.0
    for i in range(len(probes)):
        for j in range(i + 1, len(probes)):
            dev = max(dev, projective_angle(probes[i].direction, probes[j].direction))
    return SpecialPHReport(dev, max(pr.width for pr in probes), seed, probes)


def center_direction(f: TorusEndomorphism, p, depth: int = 20, cone: ConeSpec = ConeSpec(),
                     margin: float = 1e-12) -> DirectionProbe:
    """Pull back the most contracted direction at ``f^depth(p)`` to ``p``.

    Pulling back is the stable way to follow this direction: ``u_k`` at
    ``p_k`` satisfies ``Df(p_k) u_k || u_{k+1}`` by construction, and each
    ``u_k`` is checked to lie strictly outside the cone.
    """
    orbit = [np.mod(np.asarray(p, dtype=float), 1.0)]
    for _ in range(depth):
        orbit.append(np.mod(f(orbit[-1]), 1.0))
    _, _, vt = np.linalg.svd(eval_derivative(f, orbit[-1]))
    u = vt[-1]
    us = [u]
    for q in orbit[-2::-1]:
        u = _unit(np.linalg.solve(eval_derivative(f, q), u))
        us.append(u)
    us = us[::-1]  # us[k] lives at orbit[k]
    verified = 0
    for v in us:
        if not _outside(v, cone, margin):
            break
        verified += 1
    if verified < len(us):
        raise ExclusionFailed(f"pulled-back direction enters the cone at step {verified}")
    return DirectionProbe(tuple(map(float, orbit[0])), tuple(map(float, _canonical(us[0]))), depth,
                          0.0, (), verified, "center")


# ------------------------------------------------------------------ export

CSV_COLUMNS = ("x", "y", "dir_x", "dir_y", "width")


def direction_field(f: TorusEndomorphism, grid: int = 8, depth: int = 12, kind: str = "unstable",
                    seed: int = 0, cone: ConeSpec = ConeSpec()) -> list[DirectionProbe]:
    """Probes at the centres of a ``grid x grid`` lattice (unstable: one random pre-orbit each)."""
    rng = np.random.default_rng(seed)
    k = abs(f.linear_part.det)
    out = []
    for i in range(grid):
        for j in range(grid):
            p = ((i + 0.5) / grid, (j + 0.5) / grid)
            if kind == "unstable":
                out.append(unstable_direction(f, p, rng.integers(0, k, size=depth), depth, cone))
            elif kind == "center":
                out.append(center_direction(f, p, depth, cone))
            else:
                raise ValueError(f"unknown direction kind {kind!r}")
    return out


def write_direction_csv(path, probes) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for pr in probes:
            w.writerow((repr(pr.base[0]), repr(pr.base[1]), repr(pr.direction[0]),
                        repr(pr.direction[1]), repr(pr.width)))
