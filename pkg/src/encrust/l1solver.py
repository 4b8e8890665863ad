"""Basis pursuit by ADMM, plus the orthonormal DCT sparsifying basis.

Two problem modes are supported::

    exact:     min ||v||_1  s.t.  C v = b
    denoised:  min ||v||_1  s.t.  ||C v - b||_2 <= epsilon

The exact mode alternates an affine projection with soft thresholding
(the projector onto ``{C v = b}`` is precomputed once per problem).  The
denoised mode splits ``w = C v`` and projects ``w`` onto the residual ball.
Both modes rescale the data internally so the default penalty works across
problem magnitudes, and both finish with a least-squares polish on the
detected support when that improves the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    rho: float = 1.0
    polish: bool = True

    def __post_init__(self) -> None:
        if self.max_iters < 1 or self.tol_primal <= 0 or self.tol_dual <= 0 or self.rho <= 0:
            raise ValueError("solver parameters must be positive")


@dataclass
class BasisPursuitProblem:
    C: np.ndarray
    b: np.ndarray
    mode: str = "exact"
    epsilon: float = 0.0
    # optional precomputed pseudo-inverse of C (e.g. an orthogonal projector is its own)
    pinv: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if self.mode not in ("exact", "denoised"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.C.shape[0] != self.b.shape[0]:
            raise ValueError("C rows must match b length")
        if not (np.all(np.isfinite(self.C)) and np.all(np.isfinite(self.b))):
            raise ValueError("basis pursuit inputs must be finite")
        if self.mode == "denoised" and not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError("epsilon must be finite and non-negative")


@dataclass
class SolverResult:
    solution: np.ndarray
    iterations: int
    residual: float
    converged: bool


def dct_basis(n: int) -> np.ndarray:
    """Orthonormal DCT-II synthesis matrix: ``x = Psi @ theta``, ``theta = Psi.T @ x``."""
    if n < 1:
        raise ValueError("basis size must be positive")
    k = np.arange(n)
    psi = np.cos(np.pi * (2 * k[:, None] + 1) * k[None, :] / (2 * n))
    psi *= np.sqrt(2.0 / n)
    psi[:, 0] = np.sqrt(1.0 / n)
    return psi


def _soft(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _pinv(C: np.ndarray) -> np.ndarray:
    return np.linalg.pinv(C, rcond=max(C.shape) * np.finfo(np.float64).eps)


def solve_basis_pursuit(problem: BasisPursuitProblem,
                        config: SolverConfig | None = None) -> SolverResult:
    config = config or SolverConfig()
    C, b = problem.C, problem.b
    q = C.shape[1]
    if not np.any(b):
        return SolverResult(np.zeros(q), 0, 0.0, True)

    Cp = problem.pinv if problem.pinv is not None else _pinv(C)
    x_ls = Cp @ b
    scale = float(np.max(np.abs(x_ls)))
    if scale == 0.0:
        # b lies outside range(C); zero is the best the denoised ball can do
        scale = float(np.linalg.norm(b))
    if problem.mode == "exact" or problem.epsilon == 0.0:
        v, z, iters, ok = _admm_exact(C, Cp, b / scale, config)
        if config.polish and not ok:
            v = _polish(C, b / scale, v, None, support=z)
            ok = _certified(C, Cp, b / scale, v)
    else:
        v, iters, ok = _admm_denoised(C, b / scale, problem.epsilon / scale, config)
        if config.polish:
            v = _polish(C, b / scale, v, problem.epsilon / scale)
    v = v * scale
    return SolverResult(v, iters, float(np.linalg.norm(C @ v - b)), ok)


def _rebalance(rho, r, s, u_list):
    if r > 10.0 * s:
        factor = 2.0
    elif s > 10.0 * r:
        factor = 0.5
    else:
        return rho
    for u in u_list:
        u /= factor
    return rho * factor


def _admm_exact(C, Cp, b, cfg: SolverConfig):
    q = C.shape[1]
    x0 = Cp @ b
    Q = np.eye(q) - Cp @ C
    rho = cfg.rho
    z = x0.copy()
    u = np.zeros(q)
    sq = np.sqrt(q)
    x = x0
    for it in range(1, cfg.max_iters + 1):
        x = Q @ (z - u) + x0
        z_old = z
        z = _soft(x + u, 1.0 / rho)
        u += x - z
        if it % 10 == 0:
            r = np.linalg.norm(x - z)
            s = rho * np.linalg.norm(z - z_old)
            eps_p = sq * cfg.tol_primal + cfg.tol_primal * max(np.linalg.norm(x), np.linalg.norm(z))
            eps_d = sq * cfg.tol_dual + cfg.tol_dual * rho * np.linalg.norm(u)
            if r < eps_p and s < eps_d:
                if cfg.polish:
                    x = _polish(C, b, x, None, support=z)
                return x, z, it, True
            if it % 50 == 0:
                rho = _rebalance(rho, r / eps_p, s / eps_d, [u])
            if cfg.polish and it % 100 == 0:
                cand = _polish(C, b, x, None, support=z)
                if cand is not x and _certified(C, Cp, b, cand, rho * u):
                    return cand, z, it, True
    return x, z, cfg.max_iters, False


def _admm_denoised(C, b, eps, cfg: SolverConfig):
    p, q = C.shape
    nrm = np.linalg.norm(C, 2)
    Cn, bn, en = C / nrm, b / nrm, eps / nrm
    K = np.linalg.inv(np.eye(q) + Cn.T @ Cn)
    rho = cfg.rho
    z = np.zeros(q)
    w = bn.copy()
    u1 = np.zeros(q)
    u2 = np.zeros(p)
    sq = np.sqrt(q + p)
    for it in range(1, cfg.max_iters + 1):
        v = K @ ((z - u1) + Cn.T @ (w - u2))
        Cv = Cn @ v
        z_old, w_old = z, w
        z = _soft(v + u1, 1.0 / rho)
        d = Cv + u2 - bn
        dn = np.linalg.norm(d)
        w = bn + (d if dn <= en else d * (en / dn))
        u1 += v - z
        u2 += Cv - w
        if it % 10 == 0:
            r = np.hypot(np.linalg.norm(v - z), np.linalg.norm(Cv - w))
            s = rho * np.hypot(np.linalg.norm(z - z_old), np.linalg.norm(Cn.T @ (w - w_old)))
            eps_p = sq * cfg.tol_primal + cfg.tol_primal * max(np.linalg.norm(v), np.linalg.norm(z))
            eps_d = sq * cfg.tol_dual + cfg.tol_dual * rho * np.hypot(np.linalg.norm(u1), np.linalg.norm(u2))
            if r < eps_p and s < eps_d:
                return z, it, True
            if it % 50 == 0:
                rho = _rebalance(rho, r / eps_p, s / eps_d, [u1, u2])
    return z, cfg.max_iters, False


def _certified(C, Cp, b, v, dual_hint=None, tol=1e-7) -> bool:
    """KKT check for the exact problem: feasibility plus a dual vector
    ``g`` in the row space of ``C`` with ``g = sign(v)`` on the support and
    ``|g| <= 1`` elsewhere."""
    if np.linalg.norm(C @ v - b) > 1e-9 * (1.0 + np.linalg.norm(b)):
        return False
    S = np.flatnonzero(v)
    if S.size == 0:
        return True
    sgn = np.sign(v[S])
    lam, *_ = np.linalg.lstsq(C[:, S].T, sgn, rcond=None)
    candidates = [C.T @ lam]
    if dual_hint is not None:
        candidates.append(C.T @ (Cp.T @ dual_hint))
    for g in candidates:
        if np.max(np.abs(g[S] - sgn)) <= tol and np.max(np.abs(g)) <= 1.0 + tol:
            return True
    return False


def _polish(C, b, v, eps, support=None):
    """Re-fit on the support of ``v``; keep whichever point is better.

    Exact mode accepts the re-fit when it is feasible and not worse in l1.
    Denoised mode only accepts it inside the residual ball.
    """
    S = np.flatnonzero(v if support is None else support)
    if S.size == 0 or S.size > C.shape[0]:
        return v
    vs, *_ = np.linalg.lstsq(C[:, S], b, rcond=None)
    cand = np.zeros_like(v)
    cand[S] = vs
    res_c = np.linalg.norm(C @ cand - b)
    bnorm = 1.0 + np.linalg.norm(b)
    if eps is None:
        if res_c > 1e-9 * bnorm:
            return v
        res_v = np.linalg.norm(C @ v - b)
        if res_v <= 1e-9 * bnorm and np.abs(cand).sum() > np.abs(v).sum() * (1 + 1e-9):
            return v
        return cand
    if res_c > eps * (1 + 1e-9):
        return v
    return cand if np.abs(cand).sum() <= np.abs(v).sum() * (1 + 1e-6) or np.linalg.norm(C @ v - b) > eps else v
