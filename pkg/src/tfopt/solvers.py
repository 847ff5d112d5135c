"""Solvers for the voxel-space transfer-function least-squares problem.

All four entry points minimize ||A x - b||: a direct banded Cholesky
solve of the normal equations, matrix-free preconditioned CGLS, projected
gradient descent (l2 or robust l1), and an ADMM box-QP that enforces
x in [0, 1] exactly. Bins never referenced by any voxel make the Gram
matrix singular; a tiny smoothing term couples such bins to their
neighbors so factorizations succeed and empty bins land on the average
of their neighbors instead of an arbitrary value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded, eigvalsh_tridiagonal, solveh_banded

from .assembly import GramSystem, _apply_bins, _apply_bins_t, _joint_bins, assemble_gram, preshaded_colors
from .volume import ScalarVolume, TransferFunction


class SingularSystem(Exception):
    """Factorization failed even after regularization."""


class NonFinite(Exception):
    """An iterate or gradient became NaN/inf."""


EMPTY_BIN_FILL = 1e-6          # smoothing scale relative to the largest Gram diagonal
ILL_CONDITIONED = 1e8          # auto mode falls back to CGLS above this condition


@dataclass(frozen=True)
class ConstantStep:
    """Fixed step size; None picks a safe rate from a Gershgorin bound."""

    rate: Optional[float] = None

    def __post_init__(self):
        if self.rate is not None and self.rate <= 0:
            raise ValueError("step rate must be positive")


@dataclass(frozen=True)
class AdamStep:
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("Adam eps must be positive")


@dataclass(frozen=True)
class SolverConfig:
    kind: str = "auto"                 # auto | normal_direct | cgls | grad_desc | admm_qp
    max_iters: int = 1000
    rel_tolerance: float = 1e-8
    norm: str = "l2"                   # l2 | l1 (grad_desc only)
    step: Union[ConstantStep, AdamStep] = field(default_factory=AdamStep)
    admm_rho: float = 1.0
    tikhonov: float = 0.0

    def __post_init__(self):
        if self.kind not in ("auto", "normal_direct", "cgls", "grad_desc", "admm_qp"):
            raise ValueError(f"unknown solver kind {self.kind!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tolerance <= 0:
            raise ValueError("rel_tolerance must be positive")
        if self.norm not in ("l2", "l1"):
            raise ValueError("norm must be 'l2' or 'l1'")
        if self.admm_rho <= 0:
            raise ValueError("admm_rho must be positive")
        if self.tikhonov < 0:
            raise ValueError("tikhonov must be non-negative")


@dataclass
class SolveReport:
    solution: TransferFunction
    iterations: int
    objective: float
    residual_history: list[float]
    clamped: bool
    converged: bool
    solver: str
    condition: Optional[float] = None

    def to_dict(self) -> dict:
        cond = self.condition
        return {
            "solver": self.solver,
            "iterations": self.iterations,
            "objective": self.objective,
            "residual_history": list(self.residual_history),
            "clamped": self.clamped,
            "converged": self.converged,
            "condition": None if cond is None or not math.isfinite(cond) else cond,
            "n_t": self.solution.n_t,
            "entries": self.solution.entries.tolist(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------------------
# regularization


def _regularized_bands(gs: GramSystem, tikhonov: float = 0.0,
                       fill_scale: float = EMPTY_BIN_FILL) -> tuple[np.ndarray, np.ndarray]:
    """Tridiagonal bands of G plus empty-bin smoothing and optional Tikhonov.

    For every neighbor edge touching an empty bin, mu = fill/2 is added to
    both diagonal entries and subtracted from the coupling. The addition is
    a sum of PSD edge terms, so it cannot make the system indefinite, and
    at the minimum an isolated empty bin takes the average of its
    neighbors (flat extrapolation at the ends).
    """
    d = gs.diag.astype(np.float64).copy()
    e = gs.offdiag.astype(np.float64).copy()
    empty = gs.diag == 0.0
    if empty.any() and d.size > 1:
        scale = float(d.max()) if d.max() > 0 else 1.0
        mu = 0.5 * fill_scale * scale
        touch = empty[:-1] | empty[1:]
        d[:-1] += mu * touch
        d[1:] += mu * touch
        e = e - mu * touch
    if tikhonov > 0:
        d += tikhonov
    return d, e


def condition_estimate(gs: GramSystem, tikhonov: float = 0.0) -> float:
    """Condition number of the regularized Gram block; inf when singular."""
    d, e = _regularized_bands(gs, tikhonov)
    if d.size == 1:
        return 1.0 if d[0] > 0 else math.inf
    lam = eigvalsh_tridiagonal(d, e)
    lmax = float(lam[-1])
    if lmax <= 0 or lam[0] <= lmax * 1e-12:
        return math.inf
    return lmax / float(lam[0])


def clamp_tf(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Truncate a linearized TF to [0, 1]; reports whether anything moved."""
    clipped = np.clip(x, 0.0, 1.0)
    return clipped, bool(np.any(np.abs(clipped - x) > 1e-12))


def _report(x: np.ndarray, gs: GramSystem, iterations: int, history: list[float],
            clamped: bool, converged: bool, solver: str,
            condition: Optional[float] = None) -> SolveReport:
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"{solver} produced a non-finite solution")
    n_t = gs.n_t
    return SolveReport(
        solution=TransferFunction.from_linear(x, n_t),
        iterations=iterations,
        objective=float(gs.objective(x)),
        residual_history=history,
        clamped=clamped,
        converged=converged,
        solver=solver,
        condition=condition,
    )


# ---------------------------------------------------------------------------
# direct normal equations


def solve_normal_direct(gs: GramSystem, cfg: SolverConfig | None = None) -> SolveReport:
    """Banded Cholesky solve of G x = c per channel, then truncation."""
    cfg = cfg or SolverConfig(kind="normal_direct")
    if not np.all(np.isfinite(gs.rhs)):
        raise NonFinite("right-hand side contains non-finite values")
    d, e = _regularized_bands(gs, cfg.tikhonov)
    n = d.size
    ab = np.zeros((2, n))
    ab[0, 1:] = e
    ab[1] = d
    try:
        sol = solveh_banded(ab, gs.rhs.T)          # (n_t, 4), entry-major ravel
    except (LinAlgError, np.linalg.LinAlgError) as exc:
        raise SingularSystem(f"normal equations not positive definite: {exc}") from exc
    raw = sol.reshape(-1)
    x, clamped = clamp_tf(raw)
    cond = condition_estimate(gs, cfg.tikhonov)
    return _report(x, gs, 1, [float(gs.objective(x))], clamped, True,
                   "normal_direct", cond)


# ---------------------------------------------------------------------------
# CGLS


def solve_cgls(vol_o: ScalarVolume, vol_r: ScalarVolume, tf_r: TransferFunction,
               n_t: int, cfg: SolverConfig | None = None,
               x0: np.ndarray | None = None) -> SolveReport:
    """Matrix-free CGLS on ||A x - b|| with a Jacobi (column-norm) preconditioner.

    Stops when ||A^T r|| <= rel_tolerance * ||A^T b||. The recorded history
    holds ||r||^2, which decreases monotonically.
    """
    cfg = cfg or SolverConfig(kind="cgls")
    mask, j, w = _joint_bins(vol_o, vol_r, n_t)
    b = preshaded_colors(vol_r, tf_r, mask).reshape(-1)
    gs = assemble_gram(vol_o, vol_r, tf_r, n_t)

    m_inv = 1.0 / np.repeat(np.where(gs.diag > 0, gs.diag, 1.0), 4)
    x = np.zeros(4 * n_t) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    if x.shape != (4 * n_t,):
        raise ValueError("x0 must be a linearized TF of length 4 * n_t")

    r = b - _apply_bins(j, w, x, n_t)
    s = _apply_bins_t(j, w, r, n_t)
    ref = float(np.linalg.norm(_apply_bins_t(j, w, b, n_t)))
    tol = cfg.rel_tolerance * ref
    z = s * m_inv
    gamma = float(s @ z)
    p = z.copy()
    history = [float(r @ r)]
    iters = 0
    while iters < cfg.max_iters and np.linalg.norm(s) > tol:
        q = _apply_bins(j, w, p, n_t)
        qq = float(q @ q)
        if qq == 0.0:
            break
        step = gamma / qq
        x += step * p
        r -= step * q
        s = _apply_bins_t(j, w, r, n_t)
        if not np.all(np.isfinite(s)):
            raise NonFinite("CGLS residual became non-finite")
        z = s * m_inv
        gamma_new = float(s @ z)
        p = z + (gamma_new / gamma) * p
        gamma = gamma_new
        iters += 1
        history.append(float(r @ r))
    converged = bool(np.linalg.norm(s) <= tol)
    x, clamped = clamp_tf(x)
    return _report(x, gs, iters, history, clamped, converged, "cgls")


# ---------------------------------------------------------------------------
# projected gradient descent


def _gershgorin_bound(gs: GramSystem) -> float:
    d, e = gs.diag, np.abs(gs.offdiag)
    row = d.astype(np.float64).copy()
    if e.size:
        row[:-1] += e
        row[1:] += e
    return float(row.max()) if row.size else 1.0


def solve_grad_desc(vol_o: ScalarVolume, vol_r: ScalarVolume, tf_r: TransferFunction,
                    n_t: int, cfg: SolverConfig | None = None) -> SolveReport:
    """Projected (sub)gradient descent on ||A x - b|| in l2 or l1.

    Starts at 0.5 everywhere and projects onto [0, 1] each iteration.
    Stops when the largest entry displacement drops below rel_tolerance.
    """
    cfg = cfg or SolverConfig(kind="grad_desc")
    mask, j, w = _joint_bins(vol_o, vol_r, n_t)
    b = preshaded_colors(vol_r, tf_r, mask).reshape(-1)
    gs = assemble_gram(vol_o, vol_r, tf_r, n_t)

    adam = isinstance(cfg.step, AdamStep)
    if adam:
        m = np.zeros(4 * n_t)
        v = np.zeros(4 * n_t)
    else:
        rate = cfg.step.rate
        if rate is None:
            rate = 0.9 / max(_gershgorin_bound(gs), 1e-30)

    x = np.full(4 * n_t, 0.5)
    history: list[float] = []
    clamped_any = False
    iters = 0
    for it in range(1, cfg.max_iters + 1):
        res = _apply_bins(j, w, x, n_t) - b
        if cfg.norm == "l2":
            history.append(float(res @ res))
            grad = 2.0 * _apply_bins_t(j, w, res, n_t)
        else:
            history.append(float(np.abs(res).sum()))
            grad = _apply_bins_t(j, w, np.sign(res), n_t)
        if not np.all(np.isfinite(grad)):
            raise NonFinite("gradient became non-finite")
        if adam:
            st = cfg.step
            m = st.beta1 * m + (1.0 - st.beta1) * grad
            v = st.beta2 * v + (1.0 - st.beta2) * grad * grad
            mh = m / (1.0 - st.beta1 ** it)
            vh = v / (1.0 - st.beta2 ** it)
            upd = st.lr * mh / (np.sqrt(vh) + st.eps)
        else:
            upd = rate * grad
        proposal = x - upd
        x_new = np.clip(proposal, 0.0, 1.0)
        clamped_any = clamped_any or bool(np.any(proposal != x_new))
        if not np.all(np.isfinite(x_new)):
            raise NonFinite("iterate became non-finite")
        moved = float(np.abs(x_new - x).max())
        x = x_new
        iters = it
        if moved <= cfg.rel_tolerance:
            break
    res = _apply_bins(j, w, x, n_t) - b
    history.append(float(res @ res) if cfg.norm == "l2" else float(np.abs(res).sum()))
    converged = iters < cfg.max_iters or moved <= cfg.rel_tolerance
    return _report(x, gs, iters, history, clamped_any, converged, "grad_desc")


# ---------------------------------------------------------------------------
# ADMM box-QP


def solve_admm_qp(gs: GramSystem, cfg: SolverConfig | None = None) -> SolveReport:
    """ADMM on min x^T G x - 2 c^T x subject to 0 <= x <= 1.

    x-update solves (G + rho I) x = rho (z - u) + c with a banded Cholesky
    factorization computed once; z is the box projection of x + u. Stops
    on the standard primal/dual residual test with a 1e-10 absolute floor.
    The reported solution is z, which is feasible by construction.
    """
    cfg = cfg or SolverConfig(kind="admm_qp")
    if not np.all(np.isfinite(gs.rhs)):
        raise NonFinite("right-hand side contains non-finite values")
    rho = cfg.admm_rho
    d, e = _regularized_bands(gs, cfg.tikhonov)
    n = d.size
    ab = np.zeros((2, n))
    ab[0, 1:] = e
    ab[1] = d + rho
    try:
        fac = cholesky_banded(ab)
    except (LinAlgError, np.linalg.LinAlgError) as exc:
        raise SingularSystem(f"ADMM system factorization failed: {exc}") from exc

    c = gs.rhs.T                                   # (n_t, 4)
    x = np.zeros((n, 4))
    z = np.zeros((n, 4))
    u = np.zeros((n, 4))
    abs_tol = 1e-10
    sqrt_n = math.sqrt(4 * n)
    history: list[float] = []
    converged = False
    iters = 0
    for it in range(1, cfg.max_iters + 1):
        x = cho_solve_banded((fac, False), rho * (z - u) + c)
        z_old = z
        z = np.clip(x + u, 0.0, 1.0)
        u = u + x - z
        if not np.all(np.isfinite(u)):
            raise NonFinite("ADMM iterate became non-finite")
        history.append(float(gs.objective(z.reshape(-1))))
        r_norm = float(np.linalg.norm(x - z))
        s_norm = rho * float(np.linalg.norm(z - z_old))
        eps_pri = sqrt_n * abs_tol + cfg.rel_tolerance * max(
            float(np.linalg.norm(x)), float(np.linalg.norm(z)))
        eps_dual = sqrt_n * abs_tol + cfg.rel_tolerance * rho * float(np.linalg.norm(u))
        iters = it
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break

    zf = z.reshape(-1)
    # a bound is "active" when the objective gradient pushes against it
    g = 2.0 * (_gram_apply_entrymajor(gs, zf) - gs.rhs.T.reshape(-1))
    scale = max(float(np.abs(g).max()), 1.0)
    active = ((zf <= 1e-12) & (g > 1e-9 * scale)) | ((zf >= 1.0 - 1e-12) & (g < -1e-9 * scale))
    return _report(zf, gs, iters, history, bool(active.any()), converged, "admm_qp")


def _gram_apply_entrymajor(gs: GramSystem, x: np.ndarray) -> np.ndarray:
    """G x for an entry-major linearized vector."""
    per_entry = x.reshape(gs.n_t, 4)
    return gs.matvec(per_entry).reshape(-1)


# ---------------------------------------------------------------------------
# dispatch


def solve_auto(vol_o: ScalarVolume, vol_r: ScalarVolume, tf_r: TransferFunction,
               n_t: int, cfg: SolverConfig | None = None) -> SolveReport:
    """Direct solve by default; falls back to CGLS when badly conditioned."""
    cfg = cfg or SolverConfig()
    gs = assemble_gram(vol_o, vol_r, tf_r, n_t)
    cond = condition_estimate(gs, cfg.tikhonov)
    if not math.isfinite(cond) or cond > ILL_CONDITIONED:
        rep = solve_cgls(vol_o, vol_r, tf_r, n_t, cfg)
        rep.condition = cond
        return rep
    return solve_normal_direct(gs, cfg)


def optimize_voxel(vol_o: ScalarVolume, vol_r: ScalarVolume, tf_r: TransferFunction,
                   n_t: int, cfg: SolverConfig | None = None) -> SolveReport:
    """Run the solver selected by cfg.kind on the voxel-space problem."""
    cfg = cfg or SolverConfig()
    if cfg.kind == "auto":
        return solve_auto(vol_o, vol_r, tf_r, n_t, cfg)
    if cfg.kind == "normal_direct":
        return solve_normal_direct(assemble_gram(vol_o, vol_r, tf_r, n_t), cfg)
    if cfg.kind == "cgls":
        return solve_cgls(vol_o, vol_r, tf_r, n_t, cfg)
    if cfg.kind == "grad_desc":
        return solve_grad_desc(vol_o, vol_r, tf_r, n_t, cfg)
    return solve_admm_qp(assemble_gram(vol_o, vol_r, tf_r, n_t), cfg)
