"""Procedural point clouds sampled uniformly by area from analytic surfaces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import normalize

PRIMITIVES = ("sphere", "box", "torus", "cylinder")
KINDS = PRIMITIVES + ("union",)
DEFAULT_POINTS = 2048
IDENTITY_QUAT = (1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ShapeSpec:
    """One shape to sample.

    ``params`` per kind: sphere ``(radius,)``; box ``(hx, hy, hz)`` half
    extents; torus ``(major, minor)`` with minor < major; cylinder
    ``(radius, half_height)``; union ``()`` with two primitive ``parts`` and an
    ``offset`` applied to the second part.
    """

    kind: str
    params: tuple = ()
    rotation: tuple = IDENTITY_QUAT
    translation: tuple = (0.0, 0.0, 0.0)
    n_points: int = DEFAULT_POINTS
    seed: int = 0
    parts: tuple = field(default=())
    offset: tuple = (0.0, 0.0, 0.0)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.n_points < 1:
            raise ValueError("n_points must be positive")
        q = np.asarray(self.rotation, dtype=float)
        if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError(f"rotation must be a unit quaternion, got {self.rotation}")
        if len(self.translation) != 3 or len(self.offset) != 3:
            raise ValueError("translation and offset must be 3-vectors")
        expected = {"sphere": 1, "box": 3, "torus": 2, "cylinder": 2, "union": 0}[self.kind]
        if len(self.params) != expected:
            raise ValueError(f"{self.kind} takes {expected} parameters, got {len(self.params)}")
        if any(not (p > 0 and math.isfinite(p)) for p in self.params):
            raise ValueError(f"degenerate {self.kind} parameters {self.params}")
        if self.kind == "torus" and self.params[1] >= self.params[0]:
            raise ValueError("torus minor radius must be smaller than the major radius")
        if self.kind == "union":
            if len(self.parts) != 2:
                raise ValueError("union needs exactly two parts")
            for part in self.parts:
                if part.kind not in PRIMITIVES:
                    raise ValueError("union parts must be primitives")
                part.validate()
        elif self.parts:
            raise ValueError("only unions have parts")


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def surface_area(spec: ShapeSpec) -> float:
    p = spec.params
    if spec.kind == "sphere":
        return 4.0 * math.pi * p[0] ** 2
    if spec.kind == "box":
        hx, hy, hz = p
        return 8.0 * (hx * hy + hy * hz + hx * hz)
    if spec.kind == "torus":
        return 4.0 * math.pi**2 * p[0] * p[1]
    if spec.kind == "cylinder":
        r, h = p
        return 4.0 * math.pi * r * h + 2.0 * math.pi * r * r
    return sum(surface_area(part) for part in spec.parts)


def _sphere(n, rng, r):
    v = rng.standard_normal((n, 3))
    return r * v / np.linalg.norm(v, axis=1, keepdims=True)


def _box(n, rng, hx, hy, hz):
    half = np.array([hx, hy, hz])
    # face pairs normal to x, y, z, weighted by area
    areas = np.array([hy * hz, hx * hz, hx * hy])
    axis = rng.choice(3, size=n, p=areas / areas.sum())
    pts = rng.uniform(-1.0, 1.0, size=(n, 3)) * half
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    pts[np.arange(n), axis] = sign * half[axis]
    return pts


def _torus(n, rng, major, minor):
    # rejection on the area element (major + minor cos phi)
    out = np.empty((0, 2))
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        theta = rng.uniform(0.0, 2 * math.pi, m)
        phi = rng.uniform(0.0, 2 * math.pi, m)
        keep = rng.random(m) * (major + minor) < major + minor * np.cos(phi)
        out = np.vstack([out, np.column_stack([theta[keep], phi[keep]])])
    theta, phi = out[:n, 0], out[:n, 1]
    ring = major + minor * np.cos(phi)
    return np.column_stack([ring * np.cos(theta), ring * np.sin(theta), minor * np.sin(phi)])


def _cylinder(n, rng, r, h):
    side, cap = 4.0 * math.pi * r * h, 2.0 * math.pi * r * r
    on_side = rng.random(n) < side / (side + cap)
    theta = rng.uniform(0.0, 2 * math.pi, n)
    rad = np.where(on_side, r, r * np.sqrt(rng.random(n)))
    z = np.where(on_side, rng.uniform(-h, h, n), np.where(rng.random(n) < 0.5, -h, h))
    return np.column_stack([rad * np.cos(theta), rad * np.sin(theta), z])


_SAMPLERS = {"sphere": _sphere, "box": _box, "torus": _torus, "cylinder": _cylinder}


def _posed(pts, spec: ShapeSpec):
    return pts @ quat_to_matrix(spec.rotation).T + np.asarray(spec.translation, dtype=float)


def sample_surface(spec: ShapeSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Area-uniform samples of the shape in its local frame (before its own pose)."""
    if spec.kind != "union":
        return _SAMPLERS[spec.kind](n, rng, *spec.params)
    first, second = spec.parts
    areas = np.array([surface_area(first), surface_area(second)])
    n_first = rng.binomial(n, areas[0] / areas.sum())
    a = _posed(sample_surface(first, n_first, rng), first)
    b = _posed(sample_surface(second, n - n_first, rng), second) + np.asarray(spec.offset, dtype=float)
    return np.vstack([a, b])


def gen_shape(spec: ShapeSpec) -> np.ndarray:
    """Sample ``spec.n_points`` points, apply the pose, then normalize."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    return normalize(_posed(sample_surface(spec, spec.n_points, rng), spec))


def random_rotation(rng: np.random.Generator) -> tuple:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    return tuple(float(c) for c in q)


def _random_primitive(kind, rng, n_points, seed, posed=False) -> ShapeSpec:
    if kind == "sphere":
        params = (float(rng.uniform(0.3, 1.0)),)
    elif kind == "box":
        params = tuple(float(v) for v in rng.uniform(0.15, 1.0, 3))
    elif kind == "torus":
        major = float(rng.uniform(0.5, 1.0))
        params = (major, float(rng.uniform(0.1, 0.45) * major))
    else:
        params = (float(rng.uniform(0.2, 0.8)), float(rng.uniform(0.2, 1.0)))
    rotation = random_rotation(rng) if posed else IDENTITY_QUAT
    return ShapeSpec(kind, params, rotation=rotation, n_points=n_points, seed=seed)


def random_spec(rng: np.random.Generator, n_points: int = DEFAULT_POINTS) -> ShapeSpec:
    """Draw a shape from the fixed toy distribution (uniform over the five kinds)."""
    kind = KINDS[int(rng.integers(len(KINDS)))]
    seed = int(rng.integers(2**31))
    if kind != "union":
        spec = _random_primitive(kind, rng, n_points, seed)
        return ShapeSpec(spec.kind, spec.params, rotation=random_rotation(rng), n_points=n_points, seed=seed)
    parts = tuple(
        _random_primitive(PRIMITIVES[int(rng.integers(len(PRIMITIVES)))], rng, n_points, seed, posed=True)
        for _ in range(2)
    )
    offset = rng.standard_normal(3)
    offset *= rng.uniform(0.6, 1.4) / np.linalg.norm(offset)
    return ShapeSpec(
        "union",
        (),
        rotation=random_rotation(rng),
        n_points=n_points,
        seed=seed,
        parts=parts,
        offset=tuple(float(v) for v in offset),
    )


def split_sizes(n: int) -> tuple[int, int, int]:
    """80/10/10 train/val/test sizes; the remainder of the rounding goes to test."""
    n_train = n * 8 // 10
    n_val = n // 10
    return n_train, n_val, n - n_train - n_val


def split_indices(n: int) -> dict[str, np.ndarray]:
    n_train, n_val, _ = split_sizes(n)
    idx = np.arange(n)
    return {"train": idx[:n_train], "val": idx[n_train : n_train + n_val], "test": idx[n_train + n_val :]}


def make_dataset(n_shapes: int, n_points: int = DEFAULT_POINTS, seed: int = 0):
    """Return ``(clouds, specs)`` with clouds stacked as (n_shapes, n_points, 3)."""
    rng = np.random.default_rng(seed)
    specs = [random_spec(rng, n_points) for _ in range(n_shapes)]
    clouds = np.stack([gen_shape(s) for s in specs])
    return clouds, specs
