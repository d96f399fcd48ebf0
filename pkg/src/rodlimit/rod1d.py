"""The one-dimensional limit model: energy, minimization, stationarity checks.

A rod state is a field of nodal rotations R_i on a uniform grid of (0, L),
clamped to the identity at x1 = 0.  The centerline y and the directors are
reconstructed from R (first column integrated by the trapezoid rule), and
bending-torsion strains come from geodesic finite differences
A_i = log(R_i^T R_{i+1}) / dx, reported in coordinates a = (A12, A13, A23).

The minimizer is a Riemannian quasi-Newton iteration: L-BFGS in the tangent
chart R_i exp(hat(b_i)) with exact chart gradients (right-Jacobian corrected),
re-anchored and re-projected between runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .cross_section import CrossSectionMesh, Q1Form, moment_map, q1_eval
from .material import ElasticityTensor
from .rotations import (
    exp_so3,
    hat,
    log_so3,
    orthogonality_defect,
    project_rotation,
    right_jacobian,
    right_jacobian_inv,
)

_ORTHO_TOL = 1e-10

# a = (A12, A13, A23) in terms of the rotation-vector components w:
# A12 = -w3, A13 = w2, A23 = -w1.  P is symmetric and involutive.
_P = np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])


class RodSolveError(RuntimeError):
    """Minimization did not reach the requested gradient norm."""

    def __init__(self, message: str, last_iterate: "RodConfig", gradient_norm: float):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.gradient_norm = gradient_norm


@dataclass
class RodConfig:
    """Nodal rotation field on a uniform grid of (0, length)."""

    length: float
    rotations: np.ndarray  # (N+1, 3, 3)
    clamped: bool = True

    def __post_init__(self) -> None:
        self.rotations = np.asarray(self.rotations, dtype=float)
        if self.rotations.ndim != 3 or self.rotations.shape[1:] != (3, 3):
            raise ValueError("rotations must have shape (N+1, 3, 3)")
        if self.rotations.shape[0] < 2:
            raise ValueError("need at least two nodes")
        if self.length <= 0.0:
            raise ValueError("length must be positive")
        defect = orthogonality_defect(self.rotations)
        if defect > _ORTHO_TOL:
            raise ValueError(f"rotations drift from SO(3): |R^T R - Id| = {defect:.3e}")
        if np.any(np.linalg.det(self.rotations) <= 0.0):
            raise ValueError("rotation with nonpositive determinant")
        if self.clamped and np.max(np.abs(self.rotations[0] - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("clamped rod requires R_0 = Id")

    @classmethod
    def straight(cls, length: float, n_intervals: int) -> "RodConfig":
        R = np.tile(np.eye(3), (n_intervals + 1, 1, 1))
        return cls(length=length, rotations=R)

    @property
    def n_intervals(self) -> int:
        return self.rotations.shape[0] - 1

    @property
    def dx(self) -> float:
        return self.length / self.n_intervals

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_intervals + 1)


@dataclass(frozen=True)
class LoadProfile:
    """Sampled force density g(x1) per unit length, linearly interpolated."""

    x: np.ndarray
    g: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if x.ndim != 1 or len(x) < 2 or g.shape != (len(x), 3):
            raise ValueError("need x of shape (M,) with M >= 2 and g of shape (M, 3)")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(g))):
            raise ValueError("non-finite load samples")
        if np.any(np.diff(x) <= 0.0):
            raise ValueError("x samples must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "g", g)

    @classmethod
    def zero(cls, length: float) -> "LoadProfile":
        return cls(x=np.array([0.0, length]), g=np.zeros((2, 3)))

    @classmethod
    def constant(cls, vec, length: float) -> "LoadProfile":
        v = np.asarray(vec, dtype=float).reshape(3)
        return cls(x=np.array([0.0, length]), g=np.vstack([v, v]))

    def sample(self, xq: np.ndarray) -> np.ndarray:
        xq = np.asarray(xq, dtype=float)
        return np.stack([np.interp(xq, self.x, self.g[:, k]) for k in range(3)], axis=-1)

    def scale(self) -> float:
        return float(np.max(np.abs(self.g)))


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-9
    max_iters: int = 20000
    inner_maxiter: int = 1000


def frame_from_rotations(cfg: RodConfig):
    """Centerline y (trapezoidal integral of R e1) and directors (d2, d3)."""
    R = cfg.rotations
    t = R[:, :, 0]  # R e1
    y = np.zeros_like(t)
    y[1:] = np.cumsum(0.5 * cfg.dx * (t[:-1] + t[1:]), axis=0)
    return y, R[:, :, 1], R[:, :, 2]


def curvature_torsion(cfg: RodConfig) -> np.ndarray:
    """Per-interval skew coordinates a = (A12, A13, A23) of log(R_i^T R_{i+1})/dx."""
    R = cfg.rotations
    w = log_so3(np.swapaxes(R[:-1], -1, -2) @ R[1:]) / cfg.dx
    return w @ _P  # row-vector form of P w, P symmetric


def tilde_g(load: LoadProfile, grid_x: np.ndarray | None = None) -> np.ndarray:
    """Antiderivative g~(x1) = integral_L^{x1} g, trapezoidal, g~(L) = 0."""
    x = np.asarray(grid_x, dtype=float) if grid_x is not None else load.x
    g = load.sample(x)
    out = np.zeros_like(g)
    seg = 0.5 * np.diff(x)[:, None] * (g[:-1] + g[1:])
    out[:-1] = -np.cumsum(seg[::-1], axis=0)[::-1]
    return out


def _load_vector(cfg: RodConfig, load: LoadProfile) -> np.ndarray:
    """Trapezoid weights times samples: T(R) = sum_j c_j . y_j."""
    g = load.sample(cfg.x)
    tw = np.ones(len(g))
    tw[0] = tw[-1] = 0.5
    return cfg.dx * tw[:, None] * g


def energy_j2(cfg: RodConfig, form: Q1Form, load: LoadProfile) -> float:
    """J_2 = (1/2) int Q_1(a) dx1 - int g . y dx1 on the discrete state."""
    a = curvature_torsion(cfg)
    elastic = 0.5 * cfg.dx * float(np.einsum("ni,ij,nj->", a, form.matrix, a))
    y, _, _ = frame_from_rotations(cfg)
    c = _load_vector(cfg, load)
    return elastic - float(np.sum(c * y))


def elastic_energy_j2(cfg: RodConfig, form: Q1Form) -> float:
    a = curvature_torsion(cfg)
    return 0.5 * cfg.dx * float(np.einsum("ni,ij,nj->", a, form.matrix, a))


def _riemannian_gradient(R: np.ndarray, dx: float, Mw: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Exact gradient of the discrete energy w.r.t. per-node tangent vectors b.

    Nodes are perturbed by R_i exp(hat(b_i)); entry 0 is forced to zero
    afterwards by the caller (clamp).
    """
    n1 = R.shape[0]
    w = log_so3(np.swapaxes(R[:-1], -1, -2) @ R[1:])
    mw = w @ Mw.T / dx  # gradient of w^T Mw w / (2 dx) in w
    Jinv = right_jacobian_inv(w)
    grad = np.zeros((n1, 3))
    # elastic: interval i touches nodes i (left) and i+1 (right)
    grad[1:] += np.einsum("nij,nj->ni", np.swapaxes(Jinv, -1, -2), mw)
    grad[:-1] -= np.einsum("nij,nj->ni", Jinv, mw)
    # load: T = sum c_j . y_j with y the trapezoidal integral of R e1
    tail = np.zeros((n1, 3))
    tail[:-1] = np.cumsum(c[::-1], axis=0)[::-1][1:]
    v = dx * (0.5 * c + tail)
    v[0] = 0.5 * dx * tail[0]
    rv = np.einsum("nji,nj->ni", R, v)  # R^T v
    e1 = np.array([1.0, 0.0, 0.0])
    grad -= np.cross(np.broadcast_to(e1, rv.shape), rv)
    return grad


def minimize_j2(
    init: RodConfig, form: Q1Form, load: LoadProfile, opts: SolverOptions = SolverOptions()
) -> RodConfig:
    """Minimize J_2 over nodal rotations with the clamp R_0 = Id.

    Outer loop re-anchors the tangent chart; inner loop is scipy L-BFGS-B
    with exact chart gradients.  Raises RodSolveError (carrying the last
    iterate and its gradient norm) if opts.max_iters updates do not reach
    opts.tol.
    """
    if not init.clamped:
        raise ValueError("minimize_j2 expects a clamped rod")
    Mw = _P @ form.matrix @ _P
    R = init.rotations.copy()
    R[0] = np.eye(3)
    dx = init.dx
    c = _load_vector(init, load)
    n1 = R.shape[0]

    def riem_grad(Rcur: np.ndarray) -> np.ndarray:
        g = _riemannian_gradient(Rcur, dx, Mw, c)
        g[0] = 0.0
        return g

    def total_energy(Rcur: np.ndarray) -> float:
        cfg = RodConfig(length=init.length, rotations=Rcur, clamped=False)
        return energy_j2(cfg, form, load)

    gnorm = float(np.linalg.norm(riem_grad(R)))
    used = 0
    inner_gtol = 0.5 * opts.tol
    while gnorm > opts.tol:
        if used >= opts.max_iters:
            cfg = RodConfig(length=init.length, rotations=project_rotation(R))
            raise RodSolveError(
                f"no convergence after {used} iterations, gradient norm {gnorm:.3e}",
                cfg,
                gnorm,
            )
        base = R.copy()

        def fun(bflat: np.ndarray):
            b = bflat.reshape(n1, 3)
            Rt = base @ exp_so3(b)
            Rt[0] = np.eye(3)
            g = riem_grad(Rt)
            # chart correction: d/db of E(base exp(b)) = J_r(b)^T grad_Riem
            Jr = right_jacobian(b)
            gc = np.einsum("nij,nj->ni", np.swapaxes(Jr, -1, -2), g)
            gc[0] = 0.0
            return total_energy(Rt), gc.ravel()

        res = _scipy_minimize(
            fun,
            np.zeros(3 * n1),
            jac=True,
            method="L-BFGS-B",
            options={
                "maxiter": opts.inner_maxiter,
                "ftol": 0.0,
                "gtol": inner_gtol,
                "maxcor": 30,
            },
        )
        used += max(int(res.nit), 1)
        b = res.x.reshape(n1, 3)
        b[0] = 0.0
        R = project_rotation(base @ exp_so3(b))
        R[0] = np.eye(3)
        new_gnorm = float(np.linalg.norm(riem_grad(R)))
        if new_gnorm >= gnorm and np.max(np.abs(b)) < 1e-15:
            # chart step made no progress; tighten the inner tolerance
            inner_gtol *= 0.25
            if inner_gtol < 1e-2 * opts.tol / max(1.0, np.sqrt(3.0 * n1)):
                cfg = RodConfig(length=init.length, rotations=R)
                raise RodSolveError(
                    f"stalled at gradient norm {new_gnorm:.3e}", cfg, new_gnorm
                )
        gnorm = new_gnorm
    return RodConfig(length=init.length, rotations=R)


@dataclass(frozen=True)
class ResidualReport:
    """Sampled Euler-Lagrange residuals of the limit moment system."""

    x_interior: np.ndarray
    interior: np.ndarray  # (n_interior, 3): the two bending equations, twist
    boundary: np.ndarray  # (3,): natural terminal moments at x1 = L
    interior_max: float
    interior_l2: float
    boundary_max: float
    moment_scale: float
    load_scale: float


def el_residual(
    cfg: RodConfig,
    form: Q1Form,
    load: LoadProfile,
    section: CrossSectionMesh | None = None,
    L_tensor: ElasticityTensor | None = None,
) -> ResidualReport:
    """Residuals of the limit ODE system at interior nodes plus the natural
    boundary values at x1 = L.

    Moments (Etilde11, Ehat11, Ehat21 - Etilde31) are evaluated through the
    cached linear moment map of (section, L_tensor); nodal derivatives and
    values come from fourth-order staggered stencils on the per-interval
    midpoint sequence (second-order at the two near-boundary nodes), boundary
    values by linear extrapolation of the last two intervals.

    Without a section the moment map falls back to form.matrix; the two agree
    at the cell-problem minimizers (both equal the mixed-strain inner product),
    so this only forgoes an independent cross-check.
    """
    if section is not None and L_tensor is not None:
        mmap = moment_map(section, L_tensor)
    else:
        mmap = form.matrix
    a_mid = curvature_torsion(cfg)  # (N, 3)
    n = cfg.n_intervals
    dx = cfg.dx
    m_mid = a_mid @ mmap.T

    if n >= 2:
        a_node = np.empty((n + 1, 3))
        a_node[1:-1] = 0.5 * (a_mid[:-1] + a_mid[1:])
        a_node[0] = 1.5 * a_mid[0] - 0.5 * a_mid[1]
        a_node[-1] = 1.5 * a_mid[-1] - 0.5 * a_mid[-2]
    else:
        a_node = np.vstack([a_mid[0], a_mid[0]])
    m_node = a_node @ mmap.T
    boundary = m_node[-1]

    gt = tilde_g(load, cfg.x)
    rot_gt = np.einsum("nji,nj->ni", cfg.rotations, gt)  # R^T g~

    if n >= 2:
        # independent discretization of the ODE at interior nodes: fourth-order
        # staggered stencils wherever four midpoints surround the node, the
        # second-order versions at the two near-boundary nodes.  Matching the
        # optimizer's own difference structure here would make the residual a
        # restatement of its stopping test, blind to discretization error.
        dm = (m_mid[1:] - m_mid[:-1]) / dx  # at interior nodes 1..n-1
        a_i = a_node[1:-1].copy()
        m_i = m_node[1:-1].copy()
        if n >= 5:
            dm[1 : n - 2] = (
                m_mid[:-3] - 27.0 * m_mid[1:-2] + 27.0 * m_mid[2:-1] - m_mid[3:]
            ) / (24.0 * dx)
            a_i[1 : n - 2] = (
                9.0 * (a_mid[1:-2] + a_mid[2:-1]) - (a_mid[:-3] + a_mid[3:])
            ) / 16.0
            m_i[1 : n - 2] = (
                9.0 * (m_mid[1:-2] + m_mid[2:-1]) - (m_mid[:-3] + m_mid[3:])
            ) / 16.0
        rg = rot_gt[1:-1]
        r_bend2 = dm[:, 0] - a_i[:, 1] * m_i[:, 2] + a_i[:, 2] * m_i[:, 1] + rg[:, 1]
        r_bend3 = dm[:, 1] + a_i[:, 0] * m_i[:, 2] - a_i[:, 2] * m_i[:, 0] + rg[:, 2]
        r_twist = dm[:, 2] - a_i[:, 0] * m_i[:, 1] + a_i[:, 1] * m_i[:, 0]
        interior = np.stack([r_bend2, r_bend3, r_twist], axis=1)
        x_int = cfg.x[1:-1]
    else:
        interior = np.zeros((0, 3))
        x_int = np.zeros(0)

    interior_max = float(np.max(np.abs(interior))) if len(interior) else 0.0
    interior_l2 = float(np.sqrt(dx * np.sum(interior**2))) if len(interior) else 0.0
    return ResidualReport(
        x_interior=x_int,
        interior=interior,
        boundary=boundary,
        interior_max=interior_max,
        interior_l2=interior_l2,
        boundary_max=float(np.max(np.abs(boundary))),
        moment_scale=float(np.max(np.abs(m_node))) if len(m_node) else 0.0,
        load_scale=load.scale(),
    )


def riemannian_gradient_norm(cfg: RodConfig, form: Q1Form, load: LoadProfile) -> float:
    """Norm of the exact discrete-energy gradient at cfg (free nodes only)."""
    Mw = _P @ form.matrix @ _P
    c = _load_vector(cfg, load)
    g = _riemannian_gradient(cfg.rotations, cfg.dx, Mw, c)
    g[0] = 0.0
    return float(np.linalg.norm(g))
