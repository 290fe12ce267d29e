"""Log-barrier interior-point solver for structured convex subproblems.

Damped Newton steps on the barrier objective, barrier parameter reduced by a
factor of 10 per stage.  Two Newton back-ends:

  * dense: assembles the full Hessian; used for small problems and phase-1.
  * structured: never forms the Hessian.  Exploits the per-link block layout
    (batched small solves, a border Schur complement over the shared
    compression variables, and a Woodbury correction for the coupling rows).

Deterministic: identical subproblem and warm start give identical iterates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp_sparse

from .convexprog import (
    AffineRows,
    CompositeRows,
    ConvexSubproblem,
    ExpAffineRows,
    ReciprocalRows,
)


class SolverError(RuntimeError):
    pass


class NonInteriorStartError(SolverError):
    """Warm start violates strict feasibility and phase-1 is unavailable."""


@dataclass
class SolverOptions:
    mu0: float = 1.0
    mu_factor: float = 0.1
    mu_final: float = 1e-12
    newton_tol: float = 1e-8  # decrement^2 / 2 target at intermediate stages
    final_newton_tol: float = 5e-13  # tighter centering at the last stage
    max_outer: int = 50
    max_inner: int = 100
    armijo: float = 1e-4
    backtrack: float = 0.5
    dense_limit: int = 800


@dataclass
class KktResiduals:
    stationarity: float
    primal: float
    complementarity: float

    def max_residual(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity)


@dataclass
class SolveReport:
    status: str  # optimal | max-iter | infeasible
    x: np.ndarray
    objective: float
    kkt: KktResiduals
    newton_iters: int
    mu_final: float
    message: str = ""


# ---------------------------------------------------------------------------
# generic evaluation helpers


def _family_values(fam, x):
    if isinstance(fam, _ShiftedFamily):
        return fam.values(x)
    return fam.values(x)


def min_slack(sp: ConvexSubproblem, x) -> float:
    worst = np.inf
    lo_mask = np.isfinite(sp.lo)
    hi_mask = np.isfinite(sp.hi)
    if lo_mask.any():
        worst = min(worst, float((x - sp.lo)[lo_mask].min()))
    if hi_mask.any():
        worst = min(worst, float((sp.hi - x)[hi_mask].min()))
    for fam in sp.families:
        v = _family_values(fam, x)
        if v.size:
            worst = min(worst, float(np.min(np.where(np.isfinite(v), v, -np.inf))))
    return worst


def _barrier_value(sp, x, mu, cvec):
    total = float(cvec @ x)
    lo_mask = np.isfinite(sp.lo)
    hi_mask = np.isfinite(sp.hi)
    s_lo = (x - sp.lo)[lo_mask]
    s_hi = (sp.hi - x)[hi_mask]
    if (s_lo <= 0).any() or (s_hi <= 0).any():
        return np.inf
    total -= mu * (np.log(s_lo).sum() + np.log(s_hi).sum())
    for fam in sp.families:
        v = _family_values(fam, x)
        if (~np.isfinite(v)).any() or (v <= 0).any():
            return np.inf
        total -= mu * np.log(v).sum()
    return total


def _composite_grads(fam: CompositeRows, x):
    """Per-row partials (d/dp, d/dalpha, d/drho, d/du) of the quality rows."""
    rho = fam.rho_of(x)
    dp = np.zeros(fam.n_rows)
    drho = None
    if fam.has_rho:
        drho = fam.lin_rho.copy()
        for ce, a4 in zip(fam.c_exp, fam.a4_exp):
            drho += ce * a4 * np.exp(np.clip(a4 * rho, -700.0, 700.0))
    if fam.n_up:
        den = fam.d0 + fam.d1 * fam.gamma_of(x)[:, None]
        eu = np.exp(np.clip(np.outer(rho, fam.a4u), -700.0, 700.0)) if fam.has_rho else fam._eu_fixed
        term = fam.cu * eu
        dp = (term * (-fam.d1 / den**2)).sum(axis=1) * fam.g_of_p
        if fam.has_rho:
            drho += (term * fam.a4u / den).sum(axis=1)
    da = -fam.q if fam.has_alpha else None
    du = fam.ku if fam.n_u else None
    return dp, da, drho, du


def _composite_curvature(fam: CompositeRows, x):
    """Per-row second derivatives (pp, p-rho, rho-rho) of the quality rows."""
    rho = fam.rho_of(x)
    hpp = np.zeros(fam.n_rows)
    hpr = np.zeros(fam.n_rows)
    hrr = np.zeros(fam.n_rows)
    if fam.has_rho:
        for ce, a4 in zip(fam.c_exp, fam.a4_exp):
            hrr += ce * a4 * a4 * np.exp(np.clip(a4 * rho, -700.0, 700.0))
    if fam.n_up:
        den = fam.d0 + fam.d1 * fam.gamma_of(x)[:, None]
        eu = np.exp(np.clip(np.outer(rho, fam.a4u), -700.0, 700.0)) if fam.has_rho else fam._eu_fixed
        term = fam.cu * eu
        hpp = (term * (2.0 * fam.d1**2 / den**3)).sum(axis=1) * fam.g_of_p**2
        if fam.has_rho:
            hpr = (term * fam.a4u * (-fam.d1 / den**2)).sum(axis=1) * fam.g_of_p
            hrr += (term * fam.a4u**2 / den).sum(axis=1)
    return hpp, hpr, hrr


def _accum_weighted_grad(fam, x, w, out):
    """out += sum_r w_r * grad g_r for one family."""
    if isinstance(fam, _ShiftedFamily):
        _accum_weighted_grad(fam.inner, x, w, out)
        out[fam.t_index] += w.sum()
        return
    if isinstance(fam, AffineRows):
        out += np.bincount(fam.idx, weights=fam.val * w[fam.row_of_entry], minlength=out.shape[0])
    elif isinstance(fam, ReciprocalRows):
        out += np.bincount(fam.idx, weights=fam.val * w[fam.row_of_entry], minlength=out.shape[0])
        np.add.at(out, fam.ir, w * fam.c / x[fam.ir] ** 2)
    elif isinstance(fam, ExpAffineRows):
        e = fam.exp_term(x)
        np.add.at(out, fam.iu, w * fam.su)
        np.add.at(out, fam.ip, -w * fam.w * e)
    elif isinstance(fam, CompositeRows):
        dp, da, drho, du = _composite_grads(fam, x)
        np.add.at(out, fam.ip, w * dp)
        if fam.has_alpha:
            np.add.at(out, fam.ia, w * da)
        if fam.has_rho:
            np.add.at(out, fam.ir, w * drho)
        if fam.n_u:
            np.add.at(out, fam.iu.ravel(), (w[:, None] * du).ravel())
    else:  # pragma: no cover
        raise SolverError(f"unknown family {type(fam)!r}")


def _grad_barrier(sp, x, mu, cvec):
    grad = cvec.copy()
    lo_mask = np.isfinite(sp.lo)
    hi_mask = np.isfinite(sp.hi)
    grad[lo_mask] -= mu / (x - sp.lo)[lo_mask]
    grad[hi_mask] += mu / (sp.hi - x)[hi_mask]
    for fam in sp.families:
        _accum_weighted_grad(fam, x, -mu / _family_values(fam, x), grad)
    return grad


# ---------------------------------------------------------------------------
# dense Newton back-end


def _dense_rows(fam, x, n):
    """Dense gradient rows and values for one family (small problems only)."""
    if isinstance(fam, _ShiftedFamily):
        g0, rows0 = _dense_rows(fam.inner, x, n)
        rows0[:, fam.t_index] += 1.0
        return g0 + x[fam.t_index], rows0
    g = fam.values(x)
    rows = np.zeros((fam.n_rows, n))
    rr = np.arange(fam.n_rows)
    if isinstance(fam, (AffineRows, ReciprocalRows)):
        np.add.at(rows, (fam.row_of_entry, fam.idx), fam.val)
        if isinstance(fam, ReciprocalRows):
            rows[rr, fam.ir] += fam.c / x[fam.ir] ** 2
    elif isinstance(fam, ExpAffineRows):
        e = fam.exp_term(x)
        rows[rr, fam.iu] += fam.su
        rows[rr, fam.ip] += -fam.w * e
    elif isinstance(fam, CompositeRows):
        dp, da, drho, du = _composite_grads(fam, x)
        rows[rr, fam.ip] += dp
        if fam.has_alpha:
            rows[rr, fam.ia] += da
        if fam.has_rho:
            rows[rr, fam.ir] += drho
        if fam.n_u:
            np.add.at(rows, (rr[:, None], fam.iu), du)
    return g, rows


def _dense_curvature(fam, x, g, mu, H, diag):
    if isinstance(fam, _ShiftedFamily):
        _dense_curvature(fam.inner, x, g, mu, H, diag)
        return
    if isinstance(fam, ReciprocalRows):
        np.add.at(diag, fam.ir, mu * 2.0 * fam.c / (x[fam.ir] ** 3 * g))
    elif isinstance(fam, ExpAffineRows):
        np.add.at(diag, fam.ip, mu * fam.w**2 * fam.exp_term(x) / g)
    elif isinstance(fam, CompositeRows):
        hpp, hpr, hrr = _composite_curvature(fam, x)
        np.add.at(diag, fam.ip, -mu * hpp / g)
        if fam.has_rho:
            np.add.at(diag, fam.ir, -mu * hrr / g)
            np.add.at(H, (fam.ip, fam.ir), -mu * hpr / g)
            np.add.at(H, (fam.ir, fam.ip), -mu * hpr / g)


def _dense_newton_matrix(sp, x, mu):
    n = sp.n
    H = np.zeros((n, n))
    diag = np.zeros(n)
    lo_mask = np.isfinite(sp.lo)
    hi_mask = np.isfinite(sp.hi)
    diag[lo_mask] += mu / (x - sp.lo)[lo_mask] ** 2
    diag[hi_mask] += mu / (sp.hi - x)[hi_mask] ** 2
    for fam in sp.families:
        g, rows = _dense_rows(fam, x, n)
        H += (rows * (mu / g**2)[:, None]).T @ rows
        _dense_curvature(fam, x, g, mu, H, diag)
    H[np.diag_indices(n)] += diag
    return H


# ---------------------------------------------------------------------------
# structured Newton back-end


class _StructuredWorkspace:
    """Preallocated buffers plus the static/dynamic split of coupling rows.

    Builder contract (asserted): composite and local-affine families carry
    exactly one row per block in block order; exp-affine families carry a
    uniform number of rows per block, block-major.
    """

    def __init__(self, sp: ConvexSubproblem):
        bs = sp.blocks
        self.nb, self.m, self.nbrd = bs.n_blocks, bs.block_size, bs.n_border
        self.nbv = self.nb * self.m
        self.local_fams = []
        self.coupling = []
        arange_nb = np.arange(self.nb)
        for fam in sp.families:
            if fam.coupling:
                self.coupling.append(fam)
                continue
            self.local_fams.append(fam)
            if isinstance(fam, (CompositeRows, AffineRows)):
                if not np.array_equal(fam.block, arange_nb):
                    raise SolverError(f"{fam.label}: expected one row per block in order")
            elif isinstance(fam, ExpAffineRows):
                rpb = fam.n_rows // self.nb
                if rpb * self.nb != fam.n_rows or not np.array_equal(
                    fam.block, np.repeat(arange_nb, rpb)
                ):
                    raise SolverError(f"{fam.label}: expected block-major uniform rows")
            else:
                raise SolverError(f"family {type(fam)!r} cannot be local")

        # static coupling entries on block variables; dynamic (reciprocal)
        # entries live on border columns in a small dense matrix
        rows, cols, vals = [], [], []
        self.dyn = []  # (G row, border col, fam, fam row)
        r0 = 0
        for fam in self.coupling:
            roe = fam.row_of_entry + r0
            keep = fam.idx < self.nbv
            rows.extend(roe[keep].tolist())
            cols.extend(fam.idx[keep].tolist())
            vals.extend(fam.val[keep].tolist())
            bkeep = ~keep
            for rr, jj, vv in zip(roe[bkeep], fam.idx[bkeep], fam.val[bkeep]):
                self.dyn.append((int(rr), int(jj - self.nbv), None, float(vv)))
            if isinstance(fam, ReciprocalRows):
                for r in range(fam.n_rows):
                    self.dyn.append((r0 + r, int(fam.ir[r] - self.nbv), fam, r))
            r0 += fam.n_rows
        self.mc = r0
        self.G_block = sp_sparse.csr_matrix(
            (np.asarray(vals), (np.asarray(rows, dtype=int), np.asarray(cols, dtype=int))),
            shape=(self.mc, self.nbv),
        )
        self.G_border = np.zeros((self.mc, self.nbrd)) if self.nbrd else None
        for rr, cc, fam, v in self.dyn:
            if fam is None:
                self.G_border[rr, cc] = v

        self.D = np.empty((self.nb, self.m, self.m))
        self.Bb = np.zeros((self.nb, self.m, self.nbrd)) if self.nbrd else None
        self.E = np.zeros((self.nbrd, self.nbrd)) if self.nbrd else None
        # RHS bundle for the batched solves: column 0 holds -grad, the rest G^T
        self.stacked = np.zeros((self.nb, self.m, 1 + self.mc))
        gt = self.G_block.T.tocsr()
        blk = np.repeat(np.arange(self.nbv) // self.m, np.diff(gt.indptr))
        off = np.repeat(np.arange(self.nbv) % self.m, np.diff(gt.indptr))
        self.stacked[blk, off, gt.indices + 1] = gt.data

    def update_dynamic(self, x):
        for rr, cc, fam, r in self.dyn:
            if fam is not None:
                self.G_border[rr, cc] = fam.c[r] / x[fam.ir[r]] ** 2


def _structured_newton_step(sp, ws: _StructuredWorkspace, x, mu, grad):
    nb, m, nbrd = ws.nb, ws.m, ws.nbrd
    D = ws.D
    D[:] = 0.0
    if nbrd:
        ws.Bb[:] = 0.0
        ws.E[:] = 0.0
    diag = np.zeros(sp.n)
    lo_mask = np.isfinite(sp.lo)
    hi_mask = np.isfinite(sp.hi)
    diag[lo_mask] += mu / (x - sp.lo)[lo_mask] ** 2
    diag[hi_mask] += mu / (sp.hi - x)[hi_mask] ** 2
    ii = np.arange(m)
    D[:, ii, ii] += diag[: ws.nbv].reshape(nb, m)

    for fam in ws.local_fams:
        g = fam.values(x)
        w = mu / g**2
        if isinstance(fam, AffineRows):
            gb = fam.gblk
            D += w[:, None, None] * gb[:, :, None] * gb[:, None, :]
        elif isinstance(fam, ExpAffineRows):
            e = fam.exp_term(x)
            gb = np.zeros((fam.n_rows, m))
            rr = np.arange(fam.n_rows)
            gb[rr, fam.iu_off] = fam.su
            gb[rr, fam.ip_off] = -fam.w * e
            contrib = (w[:, None, None] * gb[:, :, None] * gb[:, None, :]).reshape(nb, -1, m, m)
            D += contrib.sum(axis=1)
            pp = (mu * fam.w**2 * e / g).reshape(nb, -1).sum(axis=1)
            D[:, fam.ip_off, fam.ip_off] += pp
        elif isinstance(fam, CompositeRows):
            dp, da, drho, du = _composite_grads(fam, x)
            gb = np.zeros((fam.n_rows, m))
            rr = np.arange(fam.n_rows)
            gb[rr, fam.ip_off] = dp
            if fam.has_alpha:
                gb[rr, fam.ia_off] = da
            if fam.n_u:
                gb[rr[:, None], fam.iu_off[None, :]] = du
            D += w[:, None, None] * gb[:, :, None] * gb[:, None, :]
            hpp, hpr, hrr = _composite_curvature(fam, x)
            D[:, fam.ip_off, fam.ip_off] += -mu * hpp / g
            if fam.has_rho:
                rloc = fam.ir - ws.nbv
                ws.Bb[rr, :, rloc] += (w * drho)[:, None] * gb
                ws.Bb[rr, fam.ip_off, rloc] += -mu * hpr / g
                ediag = np.bincount(rloc, weights=w * drho**2 - mu * hrr / g, minlength=nbrd)
                ws.E[np.arange(nbrd), np.arange(nbrd)] += ediag

    if nbrd:
        ib = np.arange(nbrd)
        ws.E[ib, ib] += diag[ws.nbv :]
    wc_parts = []
    for fam in ws.coupling:
        g = fam.values(x)
        wc_parts.append(mu / g**2)
        if isinstance(fam, ReciprocalRows):
            rloc = fam.ir - ws.nbv
            ediag = np.bincount(rloc, weights=mu * 2.0 * fam.c / (x[fam.ir] ** 3 * g), minlength=nbrd)
            ws.E[np.arange(nbrd), np.arange(nbrd)] += ediag
    ws.update_dynamic(x)

    rhs = -grad
    ws.stacked[:, :, 0] = rhs[: ws.nbv].reshape(nb, m)
    Y = np.linalg.solve(D, ws.stacked)  # (nb, m, 1+mc)
    if nbrd:
        Z = np.linalg.solve(D, ws.Bb)
        Eprime = ws.E - np.einsum("bim,bin->mn", ws.Bb, Z)
        rhs_r = np.empty((nbrd, 1 + ws.mc))
        rhs_r[:, 0] = rhs[ws.nbv :]
        rhs_r[:, 1:] = ws.G_border.T
        rhs_r -= np.einsum("bim,bic->mc", ws.Bb, Y)
        try:
            w_border = np.linalg.solve(Eprime, rhs_r)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular border Schur complement") from exc
        Y -= np.einsum("bim,mc->bic", Z, w_border)
    else:
        w_border = np.zeros((0, 1 + ws.mc))
    if ws.mc:
        W = np.concatenate(wc_parts)
        flatY = Y.reshape(ws.nbv, 1 + ws.mc)
        GA = ws.G_block @ flatY
        if nbrd:
            GA += ws.G_border @ w_border
        S = GA[:, 1:] + np.diag(1.0 / W)
        try:
            cF = sla.cho_factor(S, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SolverError("indefinite Woodbury system") from exc
        yv = sla.cho_solve(cF, GA[:, 0], check_finite=False)
        delta_b = flatY[:, 0] - flatY[:, 1:] @ yv
        delta_r = (w_border[:, 0] - w_border[:, 1:] @ yv) if nbrd else np.empty(0)
    else:
        delta_b = Y.reshape(ws.nbv, -1)[:, 0]
        delta_r = w_border[:, 0] if nbrd else np.empty(0)
    return np.concatenate([delta_b, delta_r])


# ---------------------------------------------------------------------------
# barrier driver


def _max_box_step(sp, x, delta):
    t = np.inf
    neg = delta < 0
    pos = delta > 0
    if neg.any():
        lo = sp.lo[neg]
        cand = np.where(np.isfinite(lo), (x[neg] - lo) / -delta[neg], np.inf)
        t = min(t, float(cand.min()))
    if pos.any():
        hi = sp.hi[pos]
        cand = np.where(np.isfinite(hi), (hi - x[pos]) / delta[pos], np.inf)
        t = min(t, float(cand.min()))
    return t


def _centering(sp, ws, x, mu, cvec, opts, tol=None, stop_hook=None):
    """Damped Newton until the decrement test passes.

    Returns (x, iterations, achieved decrement^2 / 2).
    """
    iters = 0
    tol = opts.newton_tol if tol is None else tol
    half_dec = np.inf
    while iters < opts.max_inner:
        grad = _grad_barrier(sp, x, mu, cvec)
        if ws is None:
            H = _dense_newton_matrix(sp, x, mu)
            try:
                delta = sla.cho_solve(
                    sla.cho_factor(H, lower=True, check_finite=False), -grad, check_finite=False
                )
            except np.linalg.LinAlgError:
                delta = np.linalg.lstsq(H, -grad, rcond=None)[0]
        else:
            delta = _structured_newton_step(sp, ws, x, mu, grad)
        iters += 1
        lam2 = float(-grad @ delta)
        if not np.isfinite(lam2):
            raise SolverError("Newton step lost positive definiteness")
        half_dec = lam2 / 2.0
        if half_dec <= tol:
            # tiny negative values are roundoff at convergence
            return x, iters, max(half_dec, 0.0)
        step = min(1.0, 0.995 * _max_box_step(sp, x, delta))
        phi0 = _barrier_value(sp, x, mu, cvec)
        accepted = False
        for _ in range(60):
            trial = x + step * delta
            phi1 = _barrier_value(sp, trial, mu, cvec)
            if np.isfinite(phi1) and phi1 <= phi0 - opts.armijo * step * lam2:
                x = trial
                accepted = True
                break
            step *= opts.backtrack
        if not accepted:
            # step blocked by a constraint boundary at numerical precision
            return x, iters, half_dec
        if stop_hook is not None and stop_hook(x):
            return x, iters, half_dec
    return x, iters, half_dec


def _kkt(sp, x, mu, half_decrement, cvec):
    """KKT residuals of the barrier point with central-path duals mu/s.

    Stationarity is the Newton decrement of the final centering (the natural
    Hessian-scaled norm of the barrier gradient, which equals the dual
    stationarity residual for the mu/s multipliers); primal feasibility is
    the worst scaled constraint violation; complementarity is mu itself.
    """
    worst = np.inf
    lo_mask = np.isfinite(sp.lo)
    hi_mask = np.isfinite(sp.hi)
    if lo_mask.any():
        worst = min(worst, float((x - sp.lo)[lo_mask].min()))
    if hi_mask.any():
        worst = min(worst, float((sp.hi - x)[hi_mask].min()))
    for fam in sp.families:
        v = _family_values(fam, x)
        if v.size:
            worst = min(worst, float(v.min()))
    stat = float(np.sqrt(max(2.0 * half_decrement, 0.0)))
    return KktResiduals(stationarity=stat, primal=float(max(0.0, -worst)), complementarity=mu)


def solve(sp: ConvexSubproblem, warm_start=None, options: SolverOptions | None = None) -> SolveReport:
    """Minimize objective @ x over the subproblem's feasible set.

    The warm start must be strictly interior; otherwise a dense phase-1 runs
    (problems beyond `dense_limit` variables must arrive with an interior
    start, which the SCA pipeline constructs analytically).  On success the
    returned point is a KKT point of the barrier limit; residuals are in
    scaled units.
    """
    opts = options or SolverOptions()
    cvec = np.asarray(sp.objective, dtype=float)
    x = _box_midpoint(sp) if warm_start is None else np.array(warm_start, dtype=float)
    if min_slack(sp, x) <= 0.0:
        x, repaired = _phase1(sp, x, opts)
        if not repaired:
            return SolveReport(
                status="infeasible",
                x=x,
                objective=float(cvec @ x),
                kkt=KktResiduals(np.inf, _worst_violation(sp, x), np.inf),
                newton_iters=0,
                mu_final=opts.mu0,
                message="phase-1 found no strictly interior point",
            )
    ws = None
    if sp.blocks is not None and sp.n > opts.dense_limit:
        ws = _StructuredWorkspace(sp)
    mu = opts.mu0
    total_iters = 0
    outer = 0
    half_dec = np.inf
    while True:
        last = mu <= opts.mu_final
        tol = opts.final_newton_tol if last else opts.newton_tol
        x, iters, half_dec = _centering(sp, ws, x, mu, cvec, opts, tol=tol)
        total_iters += iters
        outer += 1
        if last or outer >= opts.max_outer:
            break
        mu = max(mu * opts.mu_factor, opts.mu_final)
    status = "optimal" if (mu <= opts.mu_final and half_dec <= opts.final_newton_tol) else "max-iter"
    return SolveReport(
        status=status,
        x=x,
        objective=float(cvec @ x),
        kkt=_kkt(sp, x, mu, half_dec, cvec),
        newton_iters=total_iters,
        mu_final=mu,
    )


def _box_midpoint(sp):
    lo = np.where(np.isfinite(sp.lo), sp.lo, -1.0)
    hi = np.where(np.isfinite(sp.hi), sp.hi, np.where(np.isfinite(sp.lo), sp.lo, -1.0) + 2.0)
    return 0.5 * (lo + hi)


class _ShiftedFamily:
    """Reads g(x) + t with t the last variable (phase-1 relaxation)."""

    def __init__(self, inner, t_index):
        self.inner = inner
        self.t_index = t_index
        self.label = inner.label + "+t"
        self.coupling = True

    @property
    def n_rows(self):
        return self.inner.n_rows

    def values(self, x):
        v = self.inner.values(x)
        return v + x[self.t_index]


def _worst_violation(sp, x):
    worst = 0.0
    lo_mask = np.isfinite(sp.lo)
    hi_mask = np.isfinite(sp.hi)
    if lo_mask.any():
        worst = max(worst, float((sp.lo - x)[lo_mask].max()))
    if hi_mask.any():
        worst = max(worst, float((x - sp.hi)[hi_mask].max()))
    for fam in sp.families:
        v = _family_values(fam, x)
        v = np.where(np.isfinite(v), v, -1e6)
        if v.size:
            worst = max(worst, float((-v).max()))
    return worst


def _boxes_as_affine(sp):
    rows_idx, rows_val, consts = [], [], []
    for i in range(sp.n):
        if np.isfinite(sp.lo[i]):
            rows_idx.append(i)
            rows_val.append(1.0)
            consts.append(-sp.lo[i])
        if np.isfinite(sp.hi[i]):
            rows_idx.append(i)
            rows_val.append(-1.0)
            consts.append(sp.hi[i])
    if not consts:
        return None
    R = len(consts)
    return AffineRows(
        label="boxes",
        indptr=np.arange(R + 1),
        idx=np.asarray(rows_idx, dtype=int),
        val=np.asarray(rows_val, dtype=float),
        const=np.asarray(consts, dtype=float),
        scale=np.ones(R),
        coupling=True,
    )


def _phase1(sp: ConvexSubproblem, x0, opts: SolverOptions):
    """Strictly interior point via min t subject to g(x) + t >= 0 (dense)."""
    if sp.n + 1 > opts.dense_limit:
        raise NonInteriorStartError(
            "non-interior warm start on a large structured problem; "
            "construct an interior point before calling solve()"
        )
    shift = _worst_violation(sp, x0) + 1.0
    n1 = sp.n + 1
    obj = np.zeros(n1)
    obj[-1] = 1.0
    fams = [_ShiftedFamily(f, sp.n) for f in sp.families]
    box_rows = _boxes_as_affine(sp)
    if box_rows is not None:
        fams.append(_ShiftedFamily(box_rows, sp.n))
    lo = np.full(n1, -np.inf)
    hi = np.full(n1, np.inf)
    lo[-1] = -2.0
    hi[-1] = shift + 1.0
    aug = ConvexSubproblem(
        n=n1,
        objective=obj,
        lo=lo,
        hi=hi,
        families=fams,
        var_scale=np.concatenate([sp.var_scale, [1.0]]),
        blocks=None,
    )
    x = np.concatenate([x0, [shift]])
    sub = SolverOptions(mu0=max(1.0, shift), mu_final=1e-10, newton_tol=1e-9, dense_limit=opts.dense_limit + 1)
    mu = sub.mu0
    hook = lambda xx: xx[-1] < -1e-6
    while mu > sub.mu_final:
        x, _, _ = _centering(aug, None, x, mu, obj, sub, stop_hook=hook)
        if x[-1] < -1e-6:
            break
        mu *= sub.mu_factor
    x_int = x[:-1]
    return x_int, min_slack(sp, x_int) > 0
