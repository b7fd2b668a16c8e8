"""Closed target manifolds in R^n with extended closest-point projection.

Three variants are supported: the unit sphere (closed forms throughout),
level-set hypersurfaces (Newton projection on the Lagrange conditions,
finite-difference jets), and a planar circle embedded in R^3 (codimension 2,
closed forms).  The projection is only trusted inside the safe tube
``dist(p, N) < tube_radius / 2``; :func:`project` refuses to evaluate outside
it rather than silently extending, and chord evaluations that leave the safe
tube are flagged by the kernel assembly in :mod:`halfflow.curvature`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "OutsideTube",
    "NotAHypersurface",
    "ProjectionJet",
    "Manifold",
    "Sphere",
    "LevelSetHypersurface",
    "EmbeddedCircle",
    "ellipsoid",
    "torus",
    "project",
    "projection_jet",
    "normal_field",
]

FD_STEP_JACOBIAN = 1e-5
FD_STEP_HESSIAN = 1e-4


class OutsideTube(Exception):
    """A point left the region where the closest-point projection is trusted."""


class NotAHypersurface(Exception):
    """Operation requires a codimension-one target with a unit normal field."""


@dataclass
class ProjectionJet:
    """Projection value with first and second derivatives at a point.

    ``jacobian[i, j] = d pi_i / d p_j`` and
    ``hessian[i, j, k] = d^2 pi_i / (d p_k d p_j)``, symmetric in (j, k)
    within derivative tolerance.
    """

    value: np.ndarray
    jacobian: np.ndarray
    hessian: np.ndarray


class Manifold:
    """Base class for closed targets; subclasses provide the projection.

    Attributes
    ----------
    ambient_dim : int
    tube_radius : float
        Tube parameter ``delta``; ``project`` requires ``dist < delta / 2``.
    newton_tol, newton_max_iter : float, int
        Stopping parameters for iterative projections.
    """

    ambient_dim: int
    tube_radius: float
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    name: str = "manifold"

    # -- subclass surface ---------------------------------------------------

    def project_unchecked(self, p: np.ndarray) -> np.ndarray:
        """Closest-point projection through the smooth extension, batched."""
        raise NotImplementedError

    def is_regular(self, p: np.ndarray) -> np.ndarray:
        """Where the projection formulas are defined (away from the skeleton)."""
        raise NotImplementedError

    @property
    def is_hypersurface(self) -> bool:
        return False

    def normal(self, p: np.ndarray) -> np.ndarray:
        raise NotAHypersurface(f"{self.name} carries no global unit normal field")

    def normal_jacobian(self, p: np.ndarray) -> np.ndarray:
        raise NotAHypersurface(f"{self.name} carries no global unit normal field")

    # -- shared machinery ----------------------------------------------------

    def distance(self, p: np.ndarray) -> np.ndarray:
        """Distance to the target; ``inf`` where the projection is undefined."""
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, self.ambient_dim)
        reg = np.asarray(self.is_regular(flat))
        out = np.full(len(flat), np.inf)
        if np.any(reg):
            proj = self.project_unchecked(flat[reg])
            out[reg] = np.linalg.norm(flat[reg] - proj, axis=-1)
        return out.reshape(p.shape[:-1])

    def in_safe_tube(self, p: np.ndarray) -> np.ndarray:
        return self.distance(p) < 0.5 * self.tube_radius

    def project(self, p: np.ndarray) -> np.ndarray:
        """Projection restricted to the safe tube ``dist < tube_radius/2``.

        Raises
        ------
        OutsideTube
            If any input point sits outside the safe tube.
        """
        p = np.asarray(p, dtype=float)
        ok = self.in_safe_tube(p)
        if not np.all(ok):
            bad = np.argwhere(~ok)
            raise OutsideTube(
                f"{int((~ok).sum())} point(s) outside the safe tube of {self.name} "
                f"(first offending index {tuple(bad[0])})"
            )
        return self.project_unchecked(p)

    def tangent_projector(self, p: np.ndarray) -> np.ndarray:
        """Differential of the projection (central differences by default)."""
        return _fd_jacobian(self.project_unchecked, np.asarray(p, dtype=float))

    def projection_hessian(self, p: np.ndarray) -> np.ndarray:
        """Second derivative tensor of the projection (finite differences)."""
        return _fd_hessian(self.project_unchecked, np.asarray(p, dtype=float))


def _fd_jacobian(fn, p, step=FD_STEP_JACOBIAN):
    n = p.shape[-1]
    out = np.empty(p.shape + (n,))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        out[..., :, j] = (fn(p + e) - fn(p - e)) / (2.0 * step)
    return out


def _fd_hessian(fn, p, step=FD_STEP_HESSIAN):
    """d^2 pi_i / (dp_k dp_j) by second differences of the projection.

    The step is larger than the Jacobian step: second differences divide the
    projection accuracy by step^2, so 1e-4 balances truncation against the
    Newton noise floor.
    """
    n = p.shape[-1]
    out = np.empty(p.shape + (n, n))
    for j in range(n):
        ej = np.zeros(n)
        ej[j] = step
        for k in range(j, n):
            ek = np.zeros(n)
            ek[k] = step
            mixed = (
                fn(p + ej + ek) - fn(p + ej - ek) - fn(p - ej + ek) + fn(p - ej - ek)
            ) / (4.0 * step**2)
            out[..., :, j, k] = mixed
            out[..., :, k, j] = mixed
    return out


# ---------------------------------------------------------------------------
# Unit sphere S^{n-1} in R^n: closed forms
# ---------------------------------------------------------------------------


class Sphere(Manifold):
    """Unit sphere ``S^(n-1)`` in R^n; projection ``p / |p|`` in closed form."""

    def __init__(self, ambient_dim: int, tube_radius: float = 0.9):
        if ambient_dim < 2:
            raise ValueError("sphere needs ambient dimension >= 2")
        self.ambient_dim = int(ambient_dim)
        self.tube_radius = float(tube_radius)
        self.name = f"sphere(R^{ambient_dim})"

    def project_unchecked(self, p):
        p = np.asarray(p, dtype=float)
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def is_regular(self, p):
        p = np.asarray(p, dtype=float)
        return np.linalg.norm(p, axis=-1) > 0.05

    def distance(self, p):
        p = np.asarray(p, dtype=float)
        return np.abs(np.linalg.norm(p, axis=-1) - 1.0)

    def in_safe_tube(self, p):
        # the projection is smooth on all of R^n minus the center, so only
        # the inward excursion toward the singular point is restricted
        p = np.asarray(p, dtype=float)
        return np.linalg.norm(p, axis=-1) > 1.0 - 0.5 * self.tube_radius

    def tangent_projector(self, p):
        p = np.asarray(p, dtype=float)
        r = np.linalg.norm(p, axis=-1)
        ph = p / r[..., None]
        eye = np.eye(self.ambient_dim)
        return (eye - ph[..., :, None] * ph[..., None, :]) / r[..., None, None]

    def projection_hessian(self, p):
        p = np.asarray(p, dtype=float)
        r = np.linalg.norm(p, axis=-1)
        eye = np.eye(self.ambient_dim)
        a1 = eye[..., :, :, None] * p[..., None, None, :]
        a2 = eye[..., :, None, :] * p[..., None, :, None]
        a3 = np.einsum("jk,...i->...ijk", eye, p)
        ppp = np.einsum("...i,...j,...k->...ijk", p, p, p)
        r = r[..., None, None, None]
        return -(a1 + a2 + a3) / r**3 + 3.0 * ppp / r**5

    @property
    def is_hypersurface(self):
        return True

    def normal(self, p):
        p = np.asarray(p, dtype=float)
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def normal_jacobian(self, p):
        p = np.asarray(p, dtype=float)
        r = np.linalg.norm(p, axis=-1)
        ph = p / r[..., None]
        eye = np.eye(self.ambient_dim)
        return (eye - ph[..., :, None] * ph[..., None, :]) / r[..., None, None]


# ---------------------------------------------------------------------------
# Level-set hypersurfaces {g = 0}: Newton projection, analytic normals
# ---------------------------------------------------------------------------


class LevelSetHypersurface(Manifold):
    """Hypersurface ``{g = 0}`` with supplied gradient and Hessian evaluators.

    The projection solves the Lagrange conditions

    ``q - p + mu * grad g(q) = 0,  g(q) = 0``

    by a vectorized Newton iteration started at ``q = p``.  Normal field and
    its Jacobian come analytically from ``grad g`` and ``hess g``; the
    projection jets use finite differences of the Newton projection, which is
    more robust than differentiating the level-set formulas twice.
    """

    def __init__(
        self,
        g,
        grad_g,
        hess_g,
        ambient_dim: int,
        tube_radius: float,
        grad_floor: float,
        name: str = "level set",
        seed_point=None,
    ):
        self.g = g
        self.grad_g = grad_g
        self.hess_g = hess_g
        self.ambient_dim = int(ambient_dim)
        self.tube_radius = float(tube_radius)
        self.grad_floor = float(grad_floor)
        self.name = name
        self.seed_point = None if seed_point is None else np.asarray(seed_point, float)

    def is_regular(self, p):
        p = np.asarray(p, dtype=float)
        return np.linalg.norm(self.grad_g(p), axis=-1) > self.grad_floor

    def project_unchecked(self, p):
        p = np.asarray(p, dtype=float)
        n = self.ambient_dim
        flat = p.reshape(-1, n)
        q = flat.copy()
        mu = np.zeros(len(flat))
        eye = np.eye(n)
        for _ in range(self.newton_max_iter):
            grad = self.grad_g(q)
            res1 = q - flat + mu[:, None] * grad
            res2 = self.g(q)
            score = np.maximum(np.abs(res1).max(axis=1), np.abs(res2))
            active = (score >= self.newton_tol) & np.isfinite(score)
            if not np.any(active):
                break
            qa, mua = q[active], mu[active]
            jac = np.zeros((int(active.sum()), n + 1, n + 1))
            jac[:, :n, :n] = eye + mua[:, None, None] * self.hess_g(qa)
            jac[:, :n, -1] = grad[active]
            jac[:, -1, :n] = grad[active]
            rhs = -np.concatenate([res1[active], res2[active][:, None]], axis=1)
            try:
                delta = np.linalg.solve(jac, rhs[..., None])[..., 0]
            except np.linalg.LinAlgError:
                # rare: singular system off the skeleton; solve row by row
                delta = np.stack(
                    [np.linalg.lstsq(J, r, rcond=None)[0] for J, r in zip(jac, rhs)]
                )
            q[active] = qa + delta[:, :n]
            mu[active] = mua + delta[:, -1]
        return q.reshape(p.shape)

    @property
    def is_hypersurface(self):
        return True

    def normal(self, p):
        """Unit normal ``grad g / |grad g|`` through the smooth extension."""
        grad = self.grad_g(np.asarray(p, dtype=float))
        return grad / np.linalg.norm(grad, axis=-1, keepdims=True)

    def normal_jacobian(self, p):
        """Jacobian of the extended unit normal field."""
        p = np.asarray(p, dtype=float)
        grad = self.grad_g(p)
        ng = np.linalg.norm(grad, axis=-1)
        nu = grad / ng[..., None]
        tang = np.eye(self.ambient_dim) - nu[..., :, None] * nu[..., None, :]
        return np.einsum("...ij,...jk->...ik", tang, self.hess_g(p)) / ng[..., None, None]


def ellipsoid(semi_axes) -> LevelSetHypersurface:
    """Ellipsoid ``sum x_i^2 / a_i^2 = 1`` as a level-set hypersurface."""
    a = np.asarray(semi_axes, dtype=float)
    if a.ndim != 1 or len(a) < 2 or np.any(a <= 0):
        raise ValueError("semi-axes must be a vector of positive lengths")
    inv2 = 1.0 / a**2

    def g(p):
        return np.sum(p**2 * inv2, axis=-1) - 1.0

    def grad_g(p):
        return 2.0 * p * inv2

    def hess_g(p):
        h = np.broadcast_to(np.diag(2.0 * inv2), p.shape + (len(a),))
        return np.array(h)

    return LevelSetHypersurface(
        g,
        grad_g,
        hess_g,
        ambient_dim=len(a),
        tube_radius=0.5 * float(a.min()),
        grad_floor=0.5 * float((2.0 / a.max() ** 2) * a.min()),
        name=f"ellipsoid{tuple(np.round(a, 6))}",
        seed_point=np.eye(len(a))[-1] * a[-1],
    )


def torus(major_radius: float = 2.0, minor_radius: float = 0.5) -> LevelSetHypersurface:
    """Torus of revolution ``(sqrt(x^2+y^2) - R)^2 + z^2 = r^2`` in R^3."""
    R, r = float(major_radius), float(minor_radius)
    if not 0 < r < R:
        raise ValueError("torus needs 0 < minor_radius < major_radius")

    def g(p):
        rxy = np.sqrt(p[..., 0] ** 2 + p[..., 1] ** 2)
        return (rxy - R) ** 2 + p[..., 2] ** 2 - r**2

    def grad_g(p):
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        rxy = np.sqrt(x**2 + y**2)
        fac = 2.0 * (rxy - R) / rxy
        return np.stack([fac * x, fac * y, 2.0 * z], axis=-1)

    def hess_g(p):
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        rxy2 = x**2 + y**2
        rxy = np.sqrt(rxy2)
        out = np.zeros(p.shape + (3,))
        out[..., 0, 0] = 2.0 * (x**2 / rxy2 + (rxy - R) * (1.0 / rxy - x**2 / rxy**3))
        out[..., 1, 1] = 2.0 * (y**2 / rxy2 + (rxy - R) * (1.0 / rxy - y**2 / rxy**3))
        mixed = 2.0 * (x * y / rxy2 - (rxy - R) * x * y / rxy**3)
        out[..., 0, 1] = mixed
        out[..., 1, 0] = mixed
        out[..., 2, 2] = 2.0
        return out

    out = LevelSetHypersurface(
        g,
        grad_g,
        hess_g,
        ambient_dim=3,
        tube_radius=0.9 * r,
        grad_floor=0.2 * 2.0 * r,
        name=f"torus(R={R}, r={r})",
        seed_point=np.array([R + r, 0.0, 0.0]),
    )
    out.major_radius = R
    out.minor_radius = r
    return out


# ---------------------------------------------------------------------------
# Planar unit circle in R^3: codimension two, closed forms
# ---------------------------------------------------------------------------


class EmbeddedCircle(Manifold):
    """Unit circle in the z = 0 plane of R^3 (codimension two target).

    Projection drops the z component and normalizes in the plane; derivatives
    reuse the planar radial formulas.  There is no global unit normal field,
    so hypersurface operations raise :class:`NotAHypersurface`.
    """

    ambient_dim = 3

    def __init__(self, tube_radius: float = 0.9):
        self.tube_radius = float(tube_radius)
        self.name = "embedded circle"

    def project_unchecked(self, p):
        p = np.asarray(p, dtype=float)
        out = np.zeros_like(p)
        rxy = np.sqrt(p[..., 0] ** 2 + p[..., 1] ** 2)
        out[..., 0] = p[..., 0] / rxy
        out[..., 1] = p[..., 1] / rxy
        return out

    def is_regular(self, p):
        p = np.asarray(p, dtype=float)
        return np.sqrt(p[..., 0] ** 2 + p[..., 1] ** 2) > 0.05

    def in_safe_tube(self, p):
        # smooth away from the symmetry axis; only the inward planar
        # excursion toward the axis is restricted
        p = np.asarray(p, dtype=float)
        rxy = np.sqrt(p[..., 0] ** 2 + p[..., 1] ** 2)
        return rxy > 1.0 - 0.5 * self.tube_radius

    def tangent_projector(self, p):
        p = np.asarray(p, dtype=float)
        q = p[..., :2]
        r = np.linalg.norm(q, axis=-1)
        qh = q / r[..., None]
        out = np.zeros(p.shape + (3,))
        out[..., :2, :2] = (np.eye(2) - qh[..., :, None] * qh[..., None, :]) / r[
            ..., None, None
        ]
        return out

    def projection_hessian(self, p):
        p = np.asarray(p, dtype=float)
        q = p[..., :2]
        r = np.linalg.norm(q, axis=-1)[..., None, None, None]
        eye = np.eye(2)
        a1 = eye[..., :, :, None] * q[..., None, None, :]
        a2 = eye[..., :, None, :] * q[..., None, :, None]
        a3 = np.einsum("jk,...i->...ijk", eye, q)
        qqq = np.einsum("...i,...j,...k->...ijk", q, q, q)
        planar = -(a1 + a2 + a3) / r**3 + 3.0 * qqq / r**5
        out = np.zeros(p.shape + (3, 3))
        out[..., :2, :2, :2] = planar
        return out


# ---------------------------------------------------------------------------
# Operation front-ends
# ---------------------------------------------------------------------------


def project(manifold: Manifold, p) -> np.ndarray:
    """Closest point on the target; refuses points outside the safe tube."""
    return manifold.project(np.asarray(p, dtype=float))


def projection_jet(manifold: Manifold, p) -> ProjectionJet:
    """Projection value, Jacobian and Hessian at ``p`` (safe tube only)."""
    p = np.asarray(p, dtype=float)
    value = manifold.project(p)
    return ProjectionJet(
        value=value,
        jacobian=manifold.tangent_projector(p),
        hessian=manifold.projection_hessian(p),
    )


def normal_field(manifold: Manifold, p) -> np.ndarray:
    """Outward unit normal of a hypersurface target at on-manifold points."""
    if not manifold.is_hypersurface:
        raise NotAHypersurface(f"{manifold.name} is not a hypersurface")
    return manifold.normal(np.asarray(p, dtype=float))
