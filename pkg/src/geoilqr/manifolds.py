"""Analytic Riemannian primitives for Euclidean spaces, unit spheres and their
Cartesian products.

Points on a sphere factor are stored as unit vectors in the ambient space
(no angle parameterization), so the log/exp maps apply directly and angle
wrap-around never needs special handling. Tangent vectors are stored in
intrinsic coordinates with respect to a deterministic orthonormal basis
at each base point, built by a Householder reflection of the base vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

ANTIPODAL_TOL = 1e-9
ZERO_TOL = 1e-12


class SpecMismatch(ValueError):
    """Two manifold values that must share a spec do not."""


class AntipodalPoint(ValueError):
    """The sphere log map is undefined between antipodal points."""


@dataclass(frozen=True)
class Euclidean:
    dim: int

    @property
    def ambient_dim(self) -> int:
        return self.dim

    @property
    def tangent_dim(self) -> int:
        return self.dim


@dataclass(frozen=True)
class Sphere:
    dim: int  # intrinsic dimension; lives in R^{dim+1}

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1

    @property
    def tangent_dim(self) -> int:
        return self.dim


@dataclass(frozen=True)
class Product:
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def ambient_dim(self) -> int:
        return sum(f.ambient_dim for f in self.factors)

    @property
    def tangent_dim(self) -> int:
        return sum(f.tangent_dim for f in self.factors)


@lru_cache(maxsize=None)
def leaves(spec):
    """Flatten a spec into (leaf, ambient_slice, tangent_slice) triples."""
    out = []

    def walk(s, a0, t0):
        if isinstance(s, Product):
            for f in s.factors:
                a0, t0 = walk(f, a0, t0)
            return a0, t0
        out.append((s, slice(a0, a0 + s.ambient_dim), slice(t0, t0 + s.tangent_dim)))
        return a0 + s.ambient_dim, t0 + s.tangent_dim

    walk(spec, 0, 0)
    return tuple(out)


@dataclass(frozen=True)
class ManifoldPoint:
    spec: object
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.shape != (self.spec.ambient_dim,):
            raise SpecMismatch(
                f"point has {c.shape} coords, spec needs ({self.spec.ambient_dim},)")
        for leaf, asl, _ in leaves(self.spec):
            if isinstance(leaf, Sphere):
                n = float(np.linalg.norm(c[asl]))
                if abs(n - 1.0) > 1e-9:
                    raise ValueError(f"sphere block norm {n} is not 1 within 1e-9")
        object.__setattr__(self, "coords", c)


@dataclass(frozen=True)
class TangentVector:
    base: ManifoldPoint
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.shape != (self.base.spec.tangent_dim,):
            raise SpecMismatch(
                f"tangent has {c.shape} coords, spec needs ({self.base.spec.tangent_dim},)")
        object.__setattr__(self, "coords", c)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


def sphere_basis(p: np.ndarray) -> np.ndarray:
    """Orthonormal tangent basis (ambient x d) at unit vector p.

    Columns 2..n of the Householder reflection sending e1 to p. Deterministic
    and smooth except at p = e1 exactly, where the identity completion is used.
    """
    n = p.shape[0]
    v = p.copy()
    v[0] -= 1.0
    nv2 = float(v @ v)
    if nv2 < 1e-30:
        return np.eye(n)[:, 1:]
    return np.eye(n)[:, 1:] - np.outer(v, (2.0 / nv2) * v[1:])


def tangent_basis(spec, coords: np.ndarray) -> np.ndarray:
    """Block-diagonal ambient x tangent basis at a point with given coords."""
    B = np.zeros((spec.ambient_dim, spec.tangent_dim))
    for leaf, asl, tsl in leaves(spec):
        if isinstance(leaf, Euclidean):
            B[asl, tsl] = np.eye(leaf.dim)
        else:
            B[asl, tsl] = sphere_basis(coords[asl])
    return B


def _check_same(a: ManifoldPoint, b: ManifoldPoint):
    if a.spec != b.spec:
        raise SpecMismatch(f"specs differ: {a.spec} vs {b.spec}")


def _sphere_log(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Intrinsic log map on the unit sphere (vector in the basis at p)."""
    dot = float(np.clip(p @ q, -1.0, 1.0))
    if dot <= -1.0 + ANTIPODAL_TOL:
        raise AntipodalPoint("log map undefined for antipodal sphere points")
    w = q - dot * p
    nw = float(np.linalg.norm(w))
    if nw < ZERO_TOL:
        return np.zeros(p.shape[0] - 1)
    u = (np.arctan2(nw, dot) / nw) * w
    return sphere_basis(p).T @ u


def log_map(mu: ManifoldPoint, x: ManifoldPoint) -> TangentVector:
    """Tangent-space residual of x at base point mu."""
    _check_same(mu, x)
    out = np.empty(mu.spec.tangent_dim)
    for leaf, asl, tsl in leaves(mu.spec):
        if isinstance(leaf, Euclidean):
            out[tsl] = x.coords[asl] - mu.coords[asl]
        else:
            out[tsl] = _sphere_log(mu.coords[asl], x.coords[asl])
    return TangentVector(mu, out)


def log_map_batch(mu: ManifoldPoint, X: np.ndarray) -> np.ndarray:
    """Log map of many points (rows of X, ambient coords) at one base point."""
    X = np.asarray(X, dtype=float)
    out = np.empty((X.shape[0], mu.spec.tangent_dim))
    for leaf, asl, tsl in leaves(mu.spec):
        if isinstance(leaf, Euclidean):
            out[:, tsl] = X[:, asl] - mu.coords[asl]
        else:
            p = mu.coords[asl]
            dots = np.clip(X[:, asl] @ p, -1.0, 1.0)
            if np.any(dots <= -1.0 + ANTIPODAL_TOL):
                raise AntipodalPoint("log map undefined for antipodal sphere points")
            W = X[:, asl] - dots[:, None] * p
            nw = np.linalg.norm(W, axis=1)
            scale = np.where(nw < ZERO_TOL, 0.0,
                             np.arctan2(nw, dots) / np.maximum(nw, ZERO_TOL))
            out[:, tsl] = (scale[:, None] * W) @ sphere_basis(p)
    return out


def exp_map(mu: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    """Geodesic step from mu along tangent vector v (v.base must be mu)."""
    if v.base is not mu and not (v.base.spec == mu.spec
                                 and np.array_equal(v.base.coords, mu.coords)):
        raise SpecMismatch("tangent vector is not based at mu")
    out = np.empty(mu.spec.ambient_dim)
    for leaf, asl, tsl in leaves(mu.spec):
        if isinstance(leaf, Euclidean):
            out[asl] = mu.coords[asl] + v.coords[tsl]
        else:
            p = mu.coords[asl]
            vi = v.coords[tsl]
            nv = float(np.linalg.norm(vi))
            if nv < ZERO_TOL:
                out[asl] = p
            else:
                w = sphere_basis(p) @ (vi / nv)
                q = p * np.cos(nv) + w * np.sin(nv)
                out[asl] = q / np.linalg.norm(q)  # suppress drift
    return ManifoldPoint(mu.spec, out)


def parallel_transport(src: ManifoldPoint, dst: ManifoldPoint,
                       v: TangentVector) -> TangentVector:
    """Transport v along the geodesic from src to dst (isometric)."""
    _check_same(src, dst)
    if v.base.spec != src.spec or not np.array_equal(v.base.coords, src.coords):
        raise SpecMismatch("tangent vector is not based at the source point")
    out = np.empty(src.spec.tangent_dim)
    for leaf, asl, tsl in leaves(src.spec):
        if isinstance(leaf, Euclidean):
            out[tsl] = v.coords[tsl]
        else:
            p, q = src.coords[asl], dst.coords[asl]
            dot = float(np.clip(p @ q, -1.0, 1.0))
            if dot <= -1.0 + ANTIPODAL_TOL:
                raise AntipodalPoint("transport undefined between antipodal points")
            w = sphere_basis(p) @ v.coords[tsl]
            t = w - (q @ w) / (1.0 + dot) * (p + q)
            out[tsl] = sphere_basis(q).T @ t
    return TangentVector(dst, out)


def geodesic_distance(a: ManifoldPoint, b: ManifoldPoint) -> float:
    return float(np.linalg.norm(log_map(a, b).coords))


def log_map_jacobian(mu: ManifoldPoint, x: ManifoldPoint) -> np.ndarray:
    """Differential of Log_mu at x, intrinsic coords at x -> intrinsic at mu.

    For a sphere factor the exact closed form is used: along the geodesic
    direction the map is an isometry, orthogonal to it the rate is
    theta/sin(theta).
    """
    _check_same(mu, x)
    d = mu.spec.tangent_dim
    J = np.zeros((d, d))
    for leaf, asl, tsl in leaves(mu.spec):
        if isinstance(leaf, Euclidean):
            J[tsl, tsl] = np.eye(leaf.dim)
        else:
            p, q = mu.coords[asl], x.coords[asl]
            Bp, Bq = sphere_basis(p), sphere_basis(q)
            dot = float(np.clip(p @ q, -1.0, 1.0))
            if dot <= -1.0 + ANTIPODAL_TOL:
                raise AntipodalPoint("log differential undefined at antipode")
            theta = np.arccos(dot)
            if theta < 1e-8:
                J[tsl, tsl] = Bp.T @ Bq
                continue
            w = q - dot * p
            w /= np.linalg.norm(w)
            e = -p * np.sin(theta) + w * np.cos(theta)  # geodesic direction at q
            n = leaf.ambient_dim
            D = np.outer(w, e) + (theta / np.sin(theta)) * (
                np.eye(n) - np.outer(q, q) - np.outer(e, e))
            J[tsl, tsl] = Bp.T @ D @ Bq
    return J


def random_point(spec, rng: np.random.Generator) -> ManifoldPoint:
    """Uniform-ish random point: standard normal, sphere blocks normalized."""
    c = rng.standard_normal(spec.ambient_dim)
    for leaf, asl, _ in leaves(spec):
        if isinstance(leaf, Sphere):
            c[asl] /= np.linalg.norm(c[asl])
    return ManifoldPoint(spec, c)


def random_tangent(base: ManifoldPoint, rng: np.random.Generator,
                   scale: float = 1.0) -> TangentVector:
    return TangentVector(base, scale * rng.standard_normal(base.spec.tangent_dim))
