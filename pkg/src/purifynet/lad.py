"""Least-absolute-deviations regression: min_u ||r - A u||_1 with a tall design.

The workhorse is a primal-dual interior-point method on the LP pair

    primal:  min 1'e+ + 1'e-   s.t.  A u + e+ - e- = r,  e+, e- >= 0
    dual:    max r'y           s.t.  A'y = 0,  -1 <= y <= 1

started from an exactly feasible point (so only complementarity has to be
driven to zero), followed by a crossover step that re-solves least squares
on the detected zero-residual rows to land on an exact vertex.  Every
returned solution carries a subgradient optimality certificate: a vector
s in [-1, 1]^D that matches sign(residual) on the non-zero residuals, with
certificate_gap = ||A's||_inf.  The dual iterate seeds the certificate; a
bounded least-squares refinement of the free entries runs only if needed.

Many responses sharing one design (the per-kernel recovery problems) are
solved in a single vectorized batch via solve_many; per-problem arithmetic
never mixes across the batch, so results do not depend on batch grouping.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize


class LadError(ValueError):
    pass


class RankDeficientError(LadError):
    pass


@dataclass(frozen=True)
class LadProblem:
    """A D x q design (D >= q, full column rank) and a length-D response."""

    A: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if A.ndim != 2:
            raise LadError(f"design must be 2-D, got shape {A.shape}")
        D, q = A.shape
        if not D >= q >= 1:
            raise LadError(f"need D >= q >= 1, got D={D}, q={q}")
        if r.shape != (D,):
            raise LadError(f"response shape {r.shape} does not match design rows {D}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(r))):
            raise LadError("design and response must be finite")
        check_full_column_rank(A)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "r", r)

    @property
    def shape(self):
        return self.A.shape


def check_full_column_rank(A: np.ndarray, tol: float = 1e-10) -> None:
    """Raise RankDeficientError unless A has full column rank (pivoted QR test)."""
    R = scipy.linalg.qr(A, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0 or diag[-1] <= tol * diag[0]:
        raise RankDeficientError(
            f"design of shape {A.shape} is column rank deficient (tol {tol:g})"
        )


@dataclass
class SolveOptions:
    method: str = "lp"              # "lp" (interior point + crossover) or "irls"
    max_iter: int = 100
    gap_tol: float = 1e-11          # relative complementarity target
    cert_tol_factor: float = 1e-8   # cert_tol = factor * (1 + objective)
    zero_tol_factor: float = 1e-9   # zero_tol = factor * (1 + max|r|)
    refine_certificate: bool = True


@dataclass
class LadSolution:
    u: np.ndarray
    objective: float
    residual: np.ndarray
    certificate_gap: float
    zero_set: np.ndarray
    certified: bool
    iterations: int = 0

    def summary(self) -> dict:
        return {
            "objective": float(self.objective),
            "certificate_gap": float(self.certificate_gap),
            "certified": bool(self.certified),
            "residual_zero_count": int(self.zero_set.size),
            "iterations": int(self.iterations),
        }


def solve(prob: LadProblem, opts: SolveOptions | None = None) -> LadSolution:
    """Globally minimize ||r - A u||_1 and certify optimality."""
    return solve_many(prob.A, prob.r[None, :], opts, _skip_checks=True)[0]


def solve_many(
    A: np.ndarray,
    R: np.ndarray,
    opts: SolveOptions | None = None,
    _skip_checks: bool = False,
    chunk_size: int | None = None,
) -> list[LadSolution]:
    """Solve one LAD problem per row of R against the shared design A."""
    A = np.asarray(A, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if not _skip_checks:
        D, q = A.shape
        if not D >= q >= 1:
            raise LadError(f"need D >= q >= 1, got D={D}, q={q}")
        check_full_column_rank(A)
    if opts is None:
        opts = SolveOptions()

    # column equilibration: unit inf-norm columns condition the normal systems
    col = np.abs(A).max(axis=0)
    col[col == 0.0] = 1.0
    Ae = A / col

    if chunk_size is None:
        # keep the (B, D, q) work arrays around ~256 MB
        chunk_size = max(1, int(3.2e7 / max(1, A.shape[0] * A.shape[1])))
    sols: list[LadSolution] = []
    for lo in range(0, R.shape[0], chunk_size):
        chunk = R[lo : lo + chunk_size]
        if opts.method == "irls":
            U, Y, iters = _irls(Ae, chunk, opts)
        elif opts.method == "lp":
            U, Y, iters = _interior_point(Ae, chunk, opts)
        else:
            raise LadError(f"unknown method {opts.method!r}")
        for b in range(chunk.shape[0]):
            y = None if Y is None else Y[b]
            sols.append(_finish(A, col, chunk[b], U[b], y, iters, opts))
    return sols


# ---------------------------------------------------------------------------
# interior point core


def _interior_point(A: np.ndarray, R: np.ndarray, opts: SolveOptions):
    """Mehrotra predictor-corrector on the batch; returns (U, Y, iterations)."""
    D, q = A.shape
    B = R.shape[0]
    U = np.linalg.lstsq(A, R.T, rcond=None)[0].T
    res = R - U @ A.T
    t0 = 0.1 * (1.0 + np.abs(res).max(axis=1, keepdims=True))
    ep = np.maximum(res, 0.0) + t0          # primal feasible by construction
    em = np.maximum(-res, 0.0) + t0
    Y = np.zeros((B, D))                    # A'y = 0 holds exactly at y = 0

    alive = np.arange(B)
    it = 0
    for it in range(1, opts.max_iter + 1):
        epi, emi, Yi, Ui = ep[alive], em[alive], Y[alive], U[alive]
        zpi, zmi = 1.0 - Yi, 1.0 + Yi
        mu = (np.einsum("bd,bd->b", epi, zpi) + np.einsum("bd,bd->b", emi, zmi)) / (2 * D)
        obj = np.abs(R[alive] - Ui @ A.T).sum(axis=1)
        keep = mu >= opts.gap_tol * (1.0 + obj)
        alive = alive[keep]
        if alive.size == 0:
            break
        epi, emi, Yi = epi[keep], emi[keep], Yi[keep]
        zpi, zmi, mui = zpi[keep], zmi[keep], mu[keep]

        d = epi / zpi + emi / zmi
        w = 1.0 / d
        Aw = w[:, :, None] * A[None, :, :]
        M = np.matmul(A.T[None, :, :], Aw)          # (b, q, q) normal matrices

        def newton(rcp, rcm):
            g = rcm / zmi - rcp / zpi
            rhs = (w * g) @ A
            du = np.linalg.solve(M, rhs[..., None])[..., 0]
            dy = w * (g - du @ A.T)
            dep = (rcp + epi * dy) / zpi
            dem = (rcm - emi * dy) / zmi
            return du, dy, dep, dem

        def max_step(v, dv):
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(dv < 0.0, -v / dv, np.inf)
            return np.minimum(1.0, 0.995 * ratios.min(axis=1))

        # predictor
        du_a, dy_a, dep_a, dem_a = newton(-epi * zpi, -emi * zmi)
        a = np.minimum(
            np.minimum(max_step(epi, dep_a), max_step(emi, dem_a)),
            np.minimum(max_step(zpi, -dy_a), max_step(zmi, dy_a)),
        )[:, None]
        mu_aff = (
            np.einsum("bd,bd->b", epi + a * dep_a, zpi - a * dy_a)
            + np.einsum("bd,bd->b", emi + a * dem_a, zmi + a * dy_a)
        ) / (2 * D)
        sigma = np.clip((mu_aff / mui) ** 3, 0.0, 1.0)[:, None]

        # corrector
        du, dy, dep, dem = newton(
            sigma * mui[:, None] - epi * zpi + dep_a * dy_a,
            sigma * mui[:, None] - emi * zmi - dem_a * dy_a,
        )
        a = np.minimum(
            np.minimum(max_step(epi, dep), max_step(emi, dem)),
            np.minimum(max_step(zpi, -dy), max_step(zmi, dy)),
        )[:, None]

        U[alive] += a * du
        ep[alive] = epi + a * dep
        em[alive] = emi + a * dem
        Y[alive] = Yi + a * dy

    return U, Y, it


def _irls(A: np.ndarray, R: np.ndarray, opts: SolveOptions):
    """Iteratively reweighted least squares with decreasing smoothing."""
    U = np.linalg.lstsq(A, R.T, rcond=None)[0].T
    it = 0
    for delta in (1e-2, 1e-4, 1e-6, 1e-8, 1e-10):
        for _ in range(30):
            it += 1
            res = R - U @ A.T
            w = 1.0 / np.maximum(np.abs(res), delta)
            Aw = w[:, :, None] * A[None, :, :]
            M = np.matmul(A.T[None, :, :], Aw)
            rhs = (w * R) @ A
            U_new = np.linalg.solve(M, rhs[..., None])[..., 0]
            done = np.abs(U_new - U).max() < delta * 1e-3
            U = U_new
            if done:
                break
    return U, None, it


# ---------------------------------------------------------------------------
# crossover, certificate


def _finish(A, col, r, ue, y, iters, opts: SolveOptions) -> LadSolution:
    """Crossover to a vertex, then build the optimality certificate."""
    u = ue / col
    res = r - A @ u
    detect_tol = 1e-6 * (1.0 + np.abs(r).max(initial=0.0))
    Z = np.abs(res) <= detect_tol
    if Z.sum() >= A.shape[1]:
        AZ = A[Z]
        try:
            up = np.linalg.solve(AZ.T @ AZ, AZ.T @ r[Z])
        except np.linalg.LinAlgError:
            up = np.linalg.lstsq(AZ, r[Z], rcond=None)[0]
        res_p = r - A @ up
        if np.abs(res_p).sum() <= np.abs(res).sum() * (1.0 + 1e-12) + 1e-12:
            u, res = up, res_p

    objective = float(np.abs(res).sum())
    zero_tol = opts.zero_tol_factor * (1.0 + np.abs(r).max(initial=0.0))
    zero = np.abs(res) <= zero_tol
    cert_tol = opts.cert_tol_factor * (1.0 + objective)

    # the dual iterate is already near-feasible (A's ~ 0); force the signs
    # that subgradient optimality pins down, keep y on the zero set
    s = np.clip(y, -1.0, 1.0) if y is not None else np.zeros_like(r)
    s[~zero] = np.sign(res[~zero])
    gap = float(np.abs(A.T @ s).max(initial=0.0))
    if gap > cert_tol and zero.any() and opts.refine_certificate:
        target = -(A[~zero].T @ s[~zero])
        fit = scipy.optimize.lsq_linear(A[zero].T, target, bounds=(-1.0, 1.0))
        s[zero] = fit.x
        gap = float(np.abs(A.T @ s).max(initial=0.0))

    return LadSolution(
        u=u,
        objective=objective,
        residual=res,
        certificate_gap=gap,
        zero_set=np.flatnonzero(zero),
        certified=gap <= cert_tol,
        iterations=iters,
    )


# ---------------------------------------------------------------------------
# brute-force oracle


def solve_oracle(prob: LadProblem) -> LadSolution:
    """Enumerate all q-row subsets; exact up to linear-solve rounding.

    An LAD optimum exists at a point with at least q zero residuals, so
    checking every nonsingular q x q row system finds the global minimum.
    Guarded to D <= 16, q <= 4.
    """
    from itertools import combinations

    A, r = prob.A, prob.r
    D, q = A.shape
    if D > 16 or q > 4:
        raise LadError(f"oracle guard: need D <= 16 and q <= 4, got D={D}, q={q}")

    subsets = np.array(list(combinations(range(D), q)))
    As = A[subsets]                       # (S, q, q)
    dets = np.abs(np.linalg.det(As))
    ok = dets > 1e-12 * max(1.0, dets.max())
    best_u, best_obj = None, np.inf
    for S, Asub in zip(subsets[ok], As[ok]):
        u = np.linalg.solve(Asub, r[S])
        obj = np.abs(r - A @ u).sum()
        if obj < best_obj:
            best_obj, best_u = obj, u
    if best_u is None:
        raise RankDeficientError("no nonsingular row subset found")

    res = r - A @ best_u
    opts = SolveOptions()
    zero_tol = opts.zero_tol_factor * (1.0 + np.abs(r).max(initial=0.0))
    zero = np.abs(res) <= zero_tol
    s = np.sign(res)
    s[zero] = 0.0
    if zero.any():
        target = -(A[~zero].T @ s[~zero])
        fit = scipy.optimize.lsq_linear(A[zero].T, target, bounds=(-1.0, 1.0))
        s[zero] = fit.x
    gap = float(np.abs(A.T @ s).max(initial=0.0))
    return LadSolution(
        u=best_u,
        objective=float(best_obj),
        residual=res,
        certificate_gap=gap,
        zero_set=np.flatnonzero(zero),
        certified=gap <= opts.cert_tol_factor * (1.0 + best_obj),
    )
