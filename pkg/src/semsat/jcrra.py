"""Joint compression-ratio and resource-allocation pipeline.

Three phases around a sequence of convex restrictions of the relaxed
problem:

  A. relax association and compression to boxes, iterate convex surrogates
     linearized at the previous solution until the objective settles;
  B. snap each user's compression to the nearest option and re-iterate;
  C. round the association at 0.5, fix it, re-iterate on powers only, then
     set every active link's power to the exact minimum meeting its quality
     target and re-validate against the true model.

The subproblem objective carries a tiny gain-weighted association tie-break:
the relaxed problem has a flat zero-power face (low quality targets are free
at low SNR), and without the tie-break the barrier solver centers onto a
spread-out association that rounds badly.  The tie-break never changes the
power part of the comparison between discrete solutions materially.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import quality, solver
from .baselines import greedy_association_counts
from .convexprog import (
    AffineRows,
    BlockStructure,
    CompositeRows,
    ConvexSubproblem,
    ExpAffineRows,
    ReciprocalRows,
)
from .model import (
    AllocationSolution,
    ChannelTensor,
    FeasibilityReport,
    InvalidArgumentError,
    SystemConfig,
    UserDemand,
    check_feasible,
    required_slots,
    validate_demands,
)

log = logging.getLogger(__name__)

U_BOX_HI = 1e8
# Relative relaxation of the >= association rows (C3, C7) inside the relaxed
# solves only.  Equality-forced associations on tiny instances leave no
# strict interior otherwise; the rounded solution is re-checked exactly.
ROW_RELAX = 1e-5


class JcrraInfeasibleError(RuntimeError):
    """Instance infeasible; names the failing constraint family."""

    def __init__(self, msg, family=None, relaxed=None):
        super().__init__(msg)
        self.family = family
        self.relaxed = relaxed


class InfeasibleAfterRoundingError(JcrraInfeasibleError):
    """Rounded discrete solution cannot be repaired; carries the relaxed one."""


@dataclass
class JcrraOptions:
    max_sca_iters: int = 50
    tol: float = 1e-4
    trust_delta: float = 10.0
    rounding_threshold: float = 0.5
    tie_break_eps: float = 1e-3
    gamma_floor: float = 0.05
    presolve_deadline: bool = True
    strict_checks: bool = True
    mu0_first: float = 1.0
    mu0_warm: float = 1e-3
    mu_final: float = 1e-12


def _check_descent(history, name, tol=1e-6, atol=1e-8):
    # atol covers the barrier duality gap, which dominates when the true
    # objective sits on the zero-power face
    for a, b in zip(history, history[1:]):
        if b > a * (1.0 + tol) + atol:
            raise AssertionError(f"{name}: objective increased: {a} -> {b}")


@dataclass
class ScaState:
    """Linearization point and bookkeeping of one SCA phase."""

    iteration: int
    gamma_i: np.ndarray  # per candidate link
    rho_i: np.ndarray  # per user
    u_i: np.ndarray  # (n_links, n_u)
    objective_history: list
    converged: bool = False

    def check_descent(self, tol=1e-6):
        _check_descent(self.objective_history, "SCA", tol)


@dataclass
class _Layout:
    """Candidate-link variable layout of one phase's subproblems."""

    links: np.ndarray  # (n_links, 3) of (k, s, t)
    n_u: int
    has_alpha: bool
    has_rho: bool
    K: int

    def __post_init__(self):
        self.kk = self.links[:, 0]
        self.ss = self.links[:, 1]
        self.tt = self.links[:, 2]
        self.n_links = self.links.shape[0]
        self.block_size = (1 if not self.has_alpha else 2) + self.n_u
        self.off_p = 0
        self.off_a = 1 if self.has_alpha else -1
        self.off_u0 = self.block_size - self.n_u
        # border: compression vars plus their discrete-cost guide epigraph
        self.n_border = 2 * self.K if self.has_rho else 0
        self.n_vars = self.n_links * self.block_size + self.n_border

    def ip(self):
        return np.arange(self.n_links) * self.block_size + self.off_p

    def ia(self):
        return np.arange(self.n_links) * self.block_size + self.off_a

    def iu(self):
        base = np.arange(self.n_links)[:, None] * self.block_size + self.off_u0
        return base + np.arange(self.n_u)[None, :]

    def irho(self):
        return self.n_links * self.block_size + np.arange(self.K)

    def iguide(self):
        return self.n_links * self.block_size + self.K + np.arange(self.K)


def _candidate_links(config, demands, options):
    """All (k, s, t) triples, minus per-user post-deadline cells when that
    presolve is exact (the user needs at least one pre-deadline slot for any
    admissible compression, so post-deadline cells can never help)."""
    links = []
    for k, d in enumerate(demands):
        t_hi = config.T
        if options.presolve_deadline:
            need_min = required_slots(
                d.L_images, config.N_symbols, config.Pi[-1], config.B_hz, config.tau_s
            )
            if need_min >= 1.0:
                t_hi = d.D_slots
        for s in range(config.S):
            for t in range(t_hi):
                links.append((k, s, t))
    return np.asarray(links, dtype=int)


def _coeff_signs(coeffs):
    ju = np.where(coeffs.a1 >= 0)[0]  # slack-variable terms
    jup = np.where(coeffs.a1 < 0)[0]  # quotient upper-bound terms
    j0p = np.where(coeffs.a0 >= 0)[0]  # tangent terms
    j0n = np.where(coeffs.a0 < 0)[0]  # exact concave exp terms
    return ju, jup, j0p, j0n


def _lower_hull_segments(xs, ys):
    """Line segments (slope, intercept) of the lower convex envelope."""
    pts = sorted(zip(xs, ys))
    hull = []
    for p in pts:
        while len(hull) >= 2 and (
            (hull[-1][0] - hull[-2][0]) * (p[1] - hull[-2][1])
            - (hull[-1][1] - hull[-2][1]) * (p[0] - hull[-2][0])
        ) <= 0.0:
            hull.pop()
        hull.append(p)
    if len(hull) == 1:
        return [(0.0, hull[0][1])]
    segs = []
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        m = (y2 - y1) / (x2 - x1)
        segs.append((m, y1 - m * x1))
    return segs


@dataclass
class _GuideData:
    """Per-instance discrete-cost guide for the relaxed solves.

    segments[k] is the lower convex envelope of the per-option post-rounding
    cost (pre-deadline slot count times minimum SNR times a mean inverse
    gain); unreachable quality targets get a steep wall.  alpha_w carries the
    gain- and quality-weighted association tie-break coefficients.
    """

    segments: list
    z_lo: np.ndarray
    z_hi: np.ndarray
    alpha_w: np.ndarray

    def z_of(self, rho):
        out = np.empty(len(self.segments))
        for k, segs in enumerate(self.segments):
            out[k] = max(m * rho[k] + b for m, b in segs)
        return out


def _decoupled_cost_table(config, demands, channel, coeffs, domain):
    """Exact per-user cost of each compression option, users in isolation.

    cost[k, v] is the minimum-SNR power over the user's best ceil(need)
    pre-deadline cells; inf when the option cannot reach the quality target
    or needs more slots than the deadline window holds.  eta[k, v] is the
    per-link target SNR (inf when unreachable).
    """
    K, V = config.K, len(config.Pi)
    cost = np.full((K, V), np.inf)
    eta = np.full((K, V), np.inf)
    for k, d in enumerate(demands):
        # one sub-channel per slot: a user holds at most one cell per slot,
        # so rank the per-slot best inverse gains
        with np.errstate(divide="ignore"):
            inv_slot_best = (channel.sigma2_w[k] / channel.h[k, :, : d.D_slots]).min(axis=0)
        inv_sorted = np.sort(inv_slot_best)
        for v, rho in enumerate(config.Pi):
            need = required_slots(d.L_images, config.N_symbols, rho, config.B_hz, config.tau_s)
            n = max(int(np.ceil(need - 1e-9)), 1)
            if n > inv_sorted.size or not np.isfinite(inv_sorted[:n]).all():
                continue
            try:
                e = quality.min_snr_for_quality(rho, d.Q_ssim_pct, coeffs, domain)
            except quality.InfeasibleQualityError:
                continue
            eta[k, v] = e
            cost[k, v] = e * float(inv_sorted[:n].sum())
    return cost, eta


def _prepare_guide(layout, config, demands, channel, coeffs, domain, options,
                   cost_table, eta_table, rho0):
    """Guide epigraph from the decoupled cost table plus tie-break weights."""
    gamma_hi = domain.gamma_range[1]
    pi = np.asarray(config.Pi)
    segments, z_lo, z_hi = [], [], []
    for k in range(config.K):
        costs = cost_table[k].copy()
        finite = np.isfinite(costs)
        if finite.any():
            wall = max(costs[finite].max() * 8.0, 1e-6)
        else:
            wall = 1.0
        costs[~finite] = wall
        segments.append(_lower_hull_segments(pi, costs))
        z_lo.append(-1.0)
        z_hi.append(float(costs.max()) + 2.0)
    v0 = np.array([int(np.argmin(np.abs(pi - r))) for r in rho0])
    eta_ref = np.where(np.isfinite(eta_table[np.arange(config.K), v0]),
                       eta_table[np.arange(config.K), v0], gamma_hi)
    alpha_w = options.tie_break_eps * (
        channel.sigma2_w[layout.kk] / channel.h[layout.kk, layout.ss, layout.tt]
    ) * np.clip(eta_ref[layout.kk], 0.05, gamma_hi)
    return _GuideData(segments=segments, z_lo=np.asarray(z_lo), z_hi=np.asarray(z_hi),
                      alpha_w=alpha_w)


def build_subproblem(state, layout, config, demands, channel, coeffs, options, guide=None):
    """Emit the convex restriction at the state's linearization point.

    Variables per candidate link are (power, association, slack u_j for the
    nonnegative sigmoid coefficients), plus one compression variable per user
    (with its discrete-cost guide epigraph) when the phase optimizes
    compression.  Powers are scaled by the budget and each slack by its
    linearization value; quality rows are scaled by 100.
    """
    lay = layout
    ju, jup, j0p, j0n = _coeff_signs(coeffs)
    n = lay.n_vars
    hsig = channel.h[lay.kk, lay.ss, lay.tt] / channel.sigma2_w[lay.kk]
    if (hsig <= 0).any():
        raise InvalidArgumentError("candidate link with zero gain")
    pmax = config.p_max_w
    gp = hsig * pmax  # gamma = gp * x_p
    q_pct = np.asarray([demands[k].Q_ssim_pct for k in lay.kk], dtype=float)

    ip, iu = lay.ip(), lay.iu()
    ia = lay.ia() if lay.has_alpha else None
    irho = lay.irho() if lay.has_rho else None
    rho_lnk = state.rho_i[lay.kk]
    gam_i = state.gamma_i
    u_i = state.u_i

    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    obj = np.zeros(n)
    scale = np.ones(n)
    # power: within the power budget and the SNR trust box
    trust_lo = np.maximum(0.0, gam_i - options.trust_delta) / gp
    trust_hi = (gam_i + options.trust_delta) / gp
    lo[ip] = trust_lo
    hi[ip] = np.minimum(1.0, trust_hi)
    obj[ip] = pmax
    scale[ip] = pmax
    if lay.has_alpha:
        lo[ia] = 0.0
        hi[ia] = 1.0
        # gain/quality-weighted tie-break in watts per unit association
        obj[ia] = guide.alpha_w if guide is not None else options.tie_break_eps / hsig
    if lay.n_u:
        lo[iu] = 1.0 / u_i  # natural u >= 1 always holds below the slack bound
        hi[iu] = U_BOX_HI
        scale[iu] = u_i
    if lay.has_rho:
        lo[irho] = config.Pi[0]
        hi[irho] = config.Pi[-1]
        iz = lay.iguide()
        if guide is not None:
            lo[iz] = guide.z_lo
            hi[iz] = guide.z_hi
            obj[iz] = options.tie_break_eps
        else:
            lo[iz] = -1.0
            hi[iz] = 1.0

    families = []
    nb = lay.n_links
    arange_nb = np.arange(nb)

    # C5: association gates power (local affine rows, one per link)
    if lay.has_alpha:
        gblk = np.zeros((nb, lay.block_size))
        gblk[:, lay.off_p] = -1.0
        gblk[:, lay.off_a] = 1.0
        idx = np.stack([ip, ia], axis=1).ravel()
        val = np.tile([-1.0, 1.0], nb)
        families.append(
            AffineRows(
                label="C5",
                indptr=np.arange(nb + 1) * 2,
                idx=idx,
                val=val,
                const=np.zeros(nb),
                scale=np.full(nb, pmax),
                coupling=False,
                block=arange_nb,
                gblk=gblk,
            )
        )

    # quality slack rows (C6a): u_j >= 1 + exp(-a2 gamma - a3)
    if lay.n_u:
        rows = nb * lay.n_u
        iu_flat = iu.ravel()  # block-major, j-minor
        a2r = np.tile(coeffs.a2[ju], nb)
        a3r = np.tile(coeffs.a3[ju], nb)
        su_nat = u_i.ravel()
        families.append(
            ExpAffineRows(
                label="C6a",
                iu=iu_flat,
                su=np.ones(rows),
                ip=np.repeat(ip, lay.n_u),
                w=-a2r * np.repeat(gp, lay.n_u),
                d=-a3r - np.log(su_nat),
                c0=1.0 / su_nat,
                scale=su_nat,
                coupling=False,
                block=np.repeat(arange_nb, lay.n_u),
                iu_off=np.tile(np.arange(lay.n_u) + lay.off_u0, nb),
                ip_off=lay.off_p,
            )
        )

    # composite quality rows (C6b), scaled by 100
    QS = 100.0
    e_rho_i = np.exp(coeffs.a4[None, :] * rho_lnk[:, None])  # (nb, J)
    const = np.full(nb, coeffs.a_bar)
    lin_rho = np.zeros(nb)
    for j in j0p:
        const += coeffs.a0[j] * e_rho_i[:, j] * (1.0 - coeffs.a4[j] * rho_lnk)
        lin_rho += coeffs.a0[j] * coeffs.a4[j] * e_rho_i[:, j]
    ku = np.zeros((nb, lay.n_u))
    for jj, j in enumerate(ju):
        const += coeffs.a1[j] * (e_rho_i[:, j] / u_i[:, jj]) * (2.0 - coeffs.a4[j] * rho_lnk)
        lin_rho += coeffs.a1[j] * coeffs.a4[j] * e_rho_i[:, j] / u_i[:, jj]
        # slack enters in scaled units (x_u = u / u_i)
        ku[:, jj] = -coeffs.a1[j] * e_rho_i[:, j] / u_i[:, jj] / QS
    d0 = np.zeros((nb, len(jup)))
    d1 = np.zeros((nb, len(jup)))
    for mm, j in enumerate(jup):
        e_g = np.exp(np.clip(-coeffs.a2[j] * gam_i - coeffs.a3[j], -700.0, 700.0))
        d0[:, mm] = 1.0 + coeffs.a2[j] * e_g * gam_i + e_g
        d1[:, mm] = -coeffs.a2[j] * e_g
    if not lay.has_rho:
        # compression fixed: fold the rho-affine parts into the constant
        const = const + lin_rho * rho_lnk
        for j in j0n:
            const += coeffs.a0[j] * e_rho_i[:, j]
    comp = CompositeRows(
        label="C6b",
        ip=ip,
        g_of_p=gp,
        const=(const - (0.0 if lay.has_alpha else q_pct)) / QS,
        scale=np.full(nb, QS),
        has_alpha=lay.has_alpha,
        ia=ia,
        q=q_pct / QS if lay.has_alpha else None,
        has_rho=lay.has_rho,
        ir=irho[lay.kk] if lay.has_rho else None,
        lin_rho=lin_rho / QS if lay.has_rho else None,
        c_exp=coeffs.a0[j0n] / QS if lay.has_rho else None,
        a4_exp=coeffs.a4[j0n] if lay.has_rho else None,
        iu=iu if lay.n_u else None,
        ku=ku if lay.n_u else None,
        cu=coeffs.a1[jup] / QS if len(jup) else None,
        a4u=coeffs.a4[jup] if len(jup) else None,
        d0=d0 if len(jup) else None,
        d1=d1 if len(jup) else None,
        rho_const=None if lay.has_rho else rho_lnk,
        block=arange_nb,
        ip_off=lay.off_p,
        ia_off=lay.off_a,
        iu_off=np.arange(lay.n_u) + lay.off_u0 if lay.n_u else None,
        den_eps=quality.ES_UPPER_DEN_EPS,
    )
    families.append(comp)

    # C1: one user per cell
    if lay.has_alpha:
        families.extend(_association_rows(lay, config, demands, ia))

    # C4: per-slot power budget
    t_vals = np.unique(lay.tt)
    idx_list, ptr = [], [0]
    for t in t_vals:
        members = ip[lay.tt == t]
        idx_list.append(members)
        ptr.append(ptr[-1] + members.size)
    families.append(
        AffineRows(
            label="C4",
            indptr=np.asarray(ptr),
            idx=np.concatenate(idx_list),
            val=np.full(ptr[-1], -1.0),
            const=np.ones(len(t_vals)),
            scale=np.full(len(t_vals), pmax),
            coupling=True,
        )
    )

    # C7: pre-deadline association covers the slot requirement
    if lay.has_alpha:
        families.append(_delay_rows(lay, config, demands, ia, irho, state))

    # discrete-cost guide epigraph: z_k >= hull segment values at rho_k
    if lay.has_rho and guide is not None:
        iz = lay.iguide()
        g_idx, g_val, g_const, g_ptr, g_scale = [], [], [], [0], []
        for k, segs in enumerate(guide.segments):
            for m, b in segs:
                rs = max(1.0, abs(b))
                g_idx.extend([iz[k], irho[k]])
                g_val.extend([1.0 / rs, -m / rs])
                g_const.append(-b / rs)
                g_scale.append(rs)
                g_ptr.append(g_ptr[-1] + 2)
        families.append(
            AffineRows(
                label="RHOGUIDE",
                indptr=np.asarray(g_ptr),
                idx=np.asarray(g_idx, dtype=int),
                val=np.asarray(g_val),
                const=np.asarray(g_const),
                scale=np.asarray(g_scale),
                coupling=True,
            )
        )

    blocks = BlockStructure(n_blocks=nb, block_size=lay.block_size, n_border=lay.n_border)
    names = None
    return ConvexSubproblem(
        n=n, objective=obj, lo=lo, hi=hi, families=families,
        var_scale=scale, var_names=names, blocks=blocks,
    )


def _association_rows(lay, config, demands, ia):
    fams = []
    # C1 per (s, t): sum_k alpha <= 1
    keys = lay.ss * config.T + lay.tt
    fams.append(_grouped_rows("C1", keys, ia, -1.0, 1.0))
    # C2 per (k, t): sum_s alpha <= 1
    keys = lay.kk * config.T + lay.tt
    fams.append(_grouped_rows("C2", keys, ia, -1.0, 1.0))
    # C3 per k: sum alpha >= 1 (relaxed by ROW_RELAX, see module note)
    fams.append(_grouped_rows("C3", lay.kk, ia, 1.0, -(1.0 - ROW_RELAX)))
    return fams


def _grouped_rows(label, keys, ivars, coef, const):
    order = np.argsort(keys, kind="stable")
    keys_sorted = keys[order]
    ivars_sorted = ivars[order]
    uniq, starts = np.unique(keys_sorted, return_index=True)
    indptr = np.append(starts, keys_sorted.size)
    R = uniq.size
    return AffineRows(
        label=label,
        indptr=indptr,
        idx=ivars_sorted,
        val=np.full(keys_sorted.size, coef),
        const=np.full(R, const),
        scale=np.ones(R),
        coupling=True,
    )


def _delay_rows(lay, config, demands, ia, irho, state):
    """C7: sum of pre-deadline association >= payload/(B tau rho)."""
    idx_list, ptr, c7, irs, scales = [], [0], [], [], []
    for k, d in enumerate(demands):
        members = ia[(lay.kk == k) & (lay.tt < d.D_slots)]
        idx_list.append(members)
        ptr.append(ptr[-1] + members.size)
        c = d.L_images * config.N_symbols / (config.B_hz * config.tau_s) * (1.0 - ROW_RELAX)
        c7.append(c)
        irs.append(irho[k] if irho is not None else -1)
        scales.append(max(1.0, c / config.Pi[0]))
    scales = np.asarray(scales)
    c7 = np.asarray(c7)
    if irho is not None:
        return ReciprocalRows(
            label="C7",
            indptr=np.asarray(ptr),
            idx=np.concatenate(idx_list),
            val=np.concatenate([np.full(n, 1.0 / s) for n, s in zip(np.diff(ptr), scales)]),
            const=np.zeros(len(c7)),
            ir=np.asarray(irs),
            c=c7 / scales,
            scale=scales,
            coupling=True,
        )
    need = c7 / state.rho_i  # rho fixed per user
    return AffineRows(
        label="C7",
        indptr=np.asarray(ptr),
        idx=np.concatenate(idx_list),
        val=np.concatenate([np.full(n, 1.0 / s) for n, s in zip(np.diff(ptr), scales)]),
        const=-need / scales,
        scale=scales,
        coupling=True,
    )


# ---------------------------------------------------------------------------
# interior-point construction


def _u_bound(gamma, coeffs, ju):
    """Natural slack lower bound 1 + exp(-a2 gamma - a3) for each u term."""
    z = -coeffs.a2[ju][None, :] * np.asarray(gamma)[:, None] - coeffs.a3[ju][None, :]
    return 1.0 + np.exp(np.clip(z, -700.0, 700.0))


def _margins(K, S):
    """Interior margins: background association level and the hot-value cap,
    chosen so the cell and slot sums stay strictly below one."""
    m0 = 1e-6
    bg = m0 / (2.0 * max(K, S))
    return m0, bg, 1.0 - m0


def _interior_alpha(alpha_bin, layout, config, demands, channel, rho_per_user, options):
    """Blend a binary association into a strictly interior one.

    Active cells get a large fractional value, the rest a microscopic
    background (box interiority).  Grows the active set when the
    pre-deadline mass falls short of the slot requirement; when the
    requirement equals the capacity (no strict interior against exact
    lower-bound rows), the per-user hot value climbs toward 1 and the
    emitted C3/C7 rows carry the ROW_RELAX relaxation to open an interior.
    """
    K, S = config.K, config.S
    m0, bg, cap = _margins(K, S)
    hot_default = 0.97
    active = alpha_bin.astype(bool).copy()
    hot_user = np.full(K, hot_default)
    for k, d in enumerate(demands):
        need = required_slots(d.L_images, config.N_symbols, rho_per_user[k],
                              config.B_hz, config.tau_s)
        target = max(need, 1.0) * (1.0 - 0.5 * ROW_RELAX)
        cells_k_mask = (layout.kk == k) & (layout.tt < d.D_slots)
        n_cells = int(cells_k_mask.sum())

        def mass(n_act, hot):
            return hot * n_act + bg * (n_cells - n_act)

        while True:
            n_act = int(active[k, :, : d.D_slots].sum())
            if mass(n_act, hot_user[k]) >= target:
                break
            if mass(n_act, cap) >= target:
                hot_user[k] = min(cap, target / max(n_act, 1) + 2.0 * bg)
                continue
            free = np.where(
                (channel.h[k, :, : d.D_slots] > 0)
                & ~active[k, :, : d.D_slots]
                & ~active.any(axis=0)[:, : d.D_slots]
                & ~active[k].any(axis=0)[None, : d.D_slots]
            )
            if free[0].size == 0:
                raise JcrraInfeasibleError(
                    f"user {k}: cannot reach the slot requirement {need:.2f} "
                    f"before slot {d.D_slots}", family="C7",
                )
            gains = channel.h[k][(free[0], free[1])]
            j = int(np.argmax(gains))
            active[k, free[0][j], free[1][j]] = True
    a = np.where(active, hot_user[:, None, None], bg)
    return a, active


def initial_point(config, demands, channel, coeffs, options=None, domain=None):
    """Strictly interior starting point for the relaxed problem.

    Each user starts at the compression option minimizing its decoupled
    delivery cost (slot count times minimum SNR over its best pre-deadline
    cells); the association comes from the greedy max-gain scheme at the
    per-user connection counts (one spare connection for margin when it
    fits).  Powers sit 10% above the per-link minimum SNR and the slack
    variables 1% above their bounds.  Raises naming the failing constraint
    family when the instance is infeasible even at maximum compression.
    """
    options = options or JcrraOptions()
    domain = domain or quality.QualityDomain()
    demands = validate_demands(config, demands)
    pi = config.Pi
    if not greedy_jscc_counts_ok(config, demands, channel, pi[-1]):
        raise JcrraInfeasibleError(
            "infeasible even at maximum compression (slot requirement exceeds "
            "pre-deadline capacity)", family="C7",
        )
    cost_table, eta_table = _decoupled_cost_table(config, demands, channel, coeffs, domain)
    if not np.isfinite(cost_table).any(axis=1).all():
        bad = int(np.where(~np.isfinite(cost_table).any(axis=1))[0][0])
        raise JcrraInfeasibleError(
            f"user {bad}: no compression option is deliverable", family="C6")
    base_v = np.array([int(np.argmin(cost_table[k])) for k in range(config.K)])
    rho0, alpha_bin = _probe_compression_vectors(
        config, demands, channel, eta_table, base_v)
    if alpha_bin is None:
        raise JcrraInfeasibleError("greedy initial association failed", family="C7")
    if len(pi) > 1:
        # keep the starting compression strictly inside its box
        span = pi[-1] - pi[0]
        rho0 = np.clip(rho0, pi[0] + 1e-7 * span, pi[-1] - 1e-7 * span)

    layout = _Layout(
        links=_candidate_links(config, demands, options),
        n_u=len(_coeff_signs(coeffs)[0]),
        has_alpha=True,
        has_rho=len(pi) > 1,
        K=config.K,
    )
    alpha0, active = _interior_alpha(alpha_bin, layout, config, demands, channel,
                                     rho0, options)
    _, bg, _ = _margins(config.K, config.S)
    hsig = channel.h[layout.kk, layout.ss, layout.tt] / channel.sigma2_w[layout.kk]
    gamma0 = np.minimum(options.gamma_floor, 0.1 * hsig * bg * config.p_max_w)
    for k, d in enumerate(demands):
        eta = quality.min_snr_for_quality(float(rho0[k]), d.Q_ssim_pct, coeffs, domain)
        g0 = max(1.1 * eta, options.gamma_floor)
        mask = (layout.kk == k) & active[layout.kk, layout.ss, layout.tt]
        gamma0[mask] = g0
    p0 = gamma0 / hsig
    slot_tot = np.zeros(config.T)
    np.add.at(slot_tot, layout.tt, p0)
    if (slot_tot > 0.97 * config.p_max_w).any():
        raise JcrraInfeasibleError(
            "initial powers exceed the per-slot budget", family="C4")
    alpha_lnk = alpha0[layout.kk, layout.ss, layout.tt]
    if (p0 > 0.9 * alpha_lnk * config.p_max_w).any():
        raise JcrraInfeasibleError(
            "initial link power collides with the association gate", family="C5")
    ju = _coeff_signs(coeffs)[0]
    u0 = _u_bound(gamma0, coeffs, ju) * 1.01
    return layout, gamma0, alpha_lnk, rho0, u0


def _probe_compression_vectors(config, demands, channel, eta_table, base_v):
    """Pick the starting compression vector by exact greedy probes.

    Evaluates the decoupled per-user optimum, every single-user deviation
    from it, and the uniform median vector: greedy association at the slot
    counts, then the closed-form objective.  Returns the best vector and its
    association (None when nothing places).
    """
    pi = np.asarray(config.Pi)
    V = len(pi)
    med = np.full(config.K, (V - 1) // 2)
    probes = [base_v, med]
    for k in range(config.K):
        for v in range(V):
            if v != base_v[k] and np.isfinite(eta_table[k, v]):
                dev = base_v.copy()
                dev[k] = v
                probes.append(dev)
    with np.errstate(divide="ignore"):
        inv_h = channel.sigma2_w[:, None, None] / channel.h
    best = None
    seen = set()
    for vec in probes:
        key = tuple(int(v) for v in vec)
        if key in seen:
            continue
        seen.add(key)
        if not np.isfinite(eta_table[np.arange(config.K), vec]).all():
            continue
        counts = np.array(
            [int(np.ceil(required_slots(d.L_images, config.N_symbols, pi[vec[k]],
                                        config.B_hz, config.tau_s) - 1e-9))
             for k, d in enumerate(demands)]
        )
        alpha, remaining = greedy_association_counts(channel, config, demands, counts)
        if (remaining > 0).any():
            continue
        eta = eta_table[np.arange(config.K), vec]
        obj = float(np.nansum(np.where(alpha > 0, eta[:, None, None] * inv_h, 0.0)))
        if not np.isfinite(obj):
            continue
        if best is None or obj < best[0]:
            best = (obj, np.array([pi[v] for v in vec]), alpha)
    if best is None:
        # fall back toward maximum compression until the association places
        for idx in range((V - 1) // 2, V):
            counts = np.array(
                [int(np.ceil(required_slots(d.L_images, config.N_symbols, pi[idx],
                                            config.B_hz, config.tau_s)))
                 for d in demands]
            )
            alpha, remaining = greedy_association_counts(channel, config, demands, counts)
            if (remaining <= 0).all():
                return np.full(config.K, float(pi[idx])), alpha
        return np.full(config.K, float(pi[-1])), None
    return best[1], best[2]


def greedy_jscc_counts_ok(config, demands, channel, rho_bar):
    counts = np.array(
        [int(np.ceil(required_slots(d.L_images, config.N_symbols, rho_bar,
                                    config.B_hz, config.tau_s)))
         for d in demands]
    )
    _, remaining = greedy_association_counts(channel, config, demands, counts)
    return bool((remaining <= 0).all())


# ---------------------------------------------------------------------------
# SCA driver


@dataclass
class PhaseTrace:
    name: str
    objectives: list
    power_w: list
    newton_iters: int
    iterations: int
    converged: bool
    surrogate_gap: float = -np.inf


@dataclass
class JcrraRun:
    solution: AllocationSolution
    phases: list
    sca_iterations: int
    converged: bool
    relaxed_objective_w: float
    surrogate_gap_worst: float
    incumbent_used: bool = False


def _x_from_point(layout, config, gamma, alpha_lnk, rho, u, u_scale):
    x = np.zeros(layout.n_vars)
    hsig_pmax = None
    x[layout.ip()] = gamma  # filled by caller in scaled units
    return x


def _pack_x(layout, config, channel, gamma, alpha_lnk, rho, u_nat, u_scale, guide=None):
    hsig = channel.h[layout.kk, layout.ss, layout.tt] / channel.sigma2_w[layout.kk]
    x = np.zeros(layout.n_vars)
    x[layout.ip()] = gamma / (hsig * config.p_max_w)
    if layout.has_alpha:
        x[layout.ia()] = alpha_lnk
    if layout.n_u:
        x[layout.iu()] = u_nat / u_scale
    if layout.has_rho:
        x[layout.irho()] = rho
        if guide is not None:
            x[layout.iguide()] = np.minimum(guide.z_of(rho) + 1.0, guide.z_hi - 1e-6)
    return x


def _unpack_x(layout, config, channel, x, u_scale, rho_fixed=None):
    hsig = channel.h[layout.kk, layout.ss, layout.tt] / channel.sigma2_w[layout.kk]
    gamma = x[layout.ip()] * hsig * config.p_max_w
    alpha = x[layout.ia()] if layout.has_alpha else None
    u_nat = x[layout.iu()] * u_scale if layout.n_u else np.zeros((layout.n_links, 0))
    rho = x[layout.irho()] if layout.has_rho else rho_fixed
    return gamma, alpha, u_nat, rho


def _surrogate_gap(layout, comp_values, x, rho_lnk, gamma, coeffs):
    """Worst surrogate-over-model excess (must stay <= 0 up to roundoff)."""
    lhs = comp_values * 100.0
    fq = quality.f_q(rho_lnk, np.maximum(gamma, 0.0), coeffs)
    return float((lhs - fq).max(initial=-np.inf))


def _run_phase(name, layout, config, demands, channel, coeffs, options,
               gamma, alpha_lnk, rho, u_nat, rho_fixed, max_iters, guide=None):
    """Iterate convex restrictions from the given interior point."""
    ju = _coeff_signs(coeffs)[0]
    objectives, powers = [], []
    newton_total = 0
    converged = False
    x_ws = None
    state = None
    worst_gap = -np.inf
    descent_anchor = 0  # restarts after a constructive repair
    for i in range(max_iters):
        state = ScaState(
            iteration=i,
            gamma_i=gamma.copy(),
            rho_i=(rho.copy() if layout.has_rho else rho_fixed.copy()),
            u_i=u_nat.copy(),
            objective_history=objectives,
        )
        sp = build_subproblem(state, layout, config, demands, channel, coeffs, options, guide)
        if x_ws is None:
            x_ws = _pack_x(layout, config, channel, gamma, alpha_lnk, rho, u_nat, state.u_i, guide)
        if solver.min_slack(sp, x_ws) <= 0.0:
            # constructive repair, re-linearized at the repaired point
            x_ws = _rebuild_interior(layout, config, demands, channel, coeffs, options,
                                     state, alpha_lnk, rho_fixed if not layout.has_rho else rho,
                                     guide)
            gamma, alpha_new, u_nat, rho_new = _unpack_x(layout, config, channel, x_ws,
                                                         state.u_i * 0 + 1.0, rho_fixed)
            # x_ws was packed with u_scale equal to the rebuilt u itself
            u_nat = x_ws[layout.iu()] * 0 + _u_bound(gamma, coeffs, ju) * 1.01 if layout.n_u else u_nat
            if layout.has_alpha:
                alpha_lnk = x_ws[layout.ia()]
            if layout.has_rho:
                rho = x_ws[layout.irho()]
            state = ScaState(
                iteration=i,
                gamma_i=gamma.copy(),
                rho_i=(rho.copy() if layout.has_rho else rho_fixed.copy()),
                u_i=u_nat.copy(),
                objective_history=objectives,
            )
            sp = build_subproblem(state, layout, config, demands, channel, coeffs, options, guide)
            x_ws = _pack_x(layout, config, channel, gamma, alpha_lnk, rho, u_nat, state.u_i, guide)
            if solver.min_slack(sp, x_ws) <= 0.0:
                raise JcrraInfeasibleError(
                    f"{name}: no strictly interior point at the repaired state",
                    family="C6",
                )
            descent_anchor = len(objectives)
        opts = solver.SolverOptions(
            mu0=options.mu0_first if i == 0 else options.mu0_warm,
            mu_final=options.mu_final,
        )
        rep = solver.solve(sp, warm_start=x_ws, options=opts)
        if rep.status == "infeasible":
            raise JcrraInfeasibleError(f"{name}: subproblem infeasible", family="C6")
        newton_total += rep.newton_iters
        objectives.append(rep.objective)
        gamma, alpha_new, u_new, rho_new = _unpack_x(layout, config, channel, rep.x,
                                                     state.u_i, rho_fixed)
        if layout.has_alpha:
            alpha_lnk = alpha_new
        rho = rho_new if layout.has_rho else rho
        power = float(rep.x[layout.ip()].sum() * config.p_max_w)
        powers.append(power)
        if options.strict_checks:
            comp = next(f for f in sp.families if f.label == "C6b")
            rho_lnk = (rho_new if layout.has_rho else rho_fixed)[layout.kk]
            q_lnk = np.asarray([demands[k].Q_ssim_pct for k in layout.kk]) / 100.0
            vals = comp.values(rep.x)
            vals = vals + (comp.q * rep.x[comp.ia] if layout.has_alpha else q_lnk)
            gap = _surrogate_gap(layout, vals, rep.x, rho_lnk, gamma, coeffs)
            worst_gap = max(worst_gap, gap)
            if gap > 1e-6:
                raise AssertionError(f"{name}: surrogate exceeded the exact model by {gap}")
            _check_descent(objectives[descent_anchor:], name)
        u_nat = u_new
        if len(objectives) >= 2:
            prev, cur = objectives[-2], objectives[-1]
            if abs(cur - prev) / max(abs(prev), 1e-12) < options.tol:
                converged = True
                break
        # lifted warm start for the next restriction (strictly interior by
        # tangency of the new surrogate at the previous barrier point)
        gamma = gamma * (1.0 + 1e-6) + 1e-12
        u_nat = np.maximum(u_new, _u_bound(gamma, coeffs, ju) * (1.0 + 1e-9))
        if layout.has_rho:
            rho = np.clip(rho, config.Pi[0] + 1e-11, config.Pi[-1] - 1e-11)
        x_ws = _pack_x(layout, config, channel, gamma, alpha_lnk, rho, u_nat, u_nat, guide)
    trace = PhaseTrace(name=name, objectives=objectives, power_w=powers,
                       newton_iters=newton_total, iterations=len(objectives),
                       converged=converged, surrogate_gap=worst_gap)
    return trace, gamma, alpha_lnk, rho, u_nat


def _rebuild_interior(layout, config, demands, channel, coeffs, options, state,
                      alpha_lnk, rho_per_user, guide=None):
    """Constructive fallback interior point at the current linearization.

    Re-derives a margin-safe association from the rounded shape of the
    current one, then sets powers 10% above the per-user minimum SNR.
    Raises the usual infeasibility error when even that fails.
    """
    domain = quality.QualityDomain()
    _, bg, _ = _margins(config.K, config.S)
    hsig = channel.h[layout.kk, layout.ss, layout.tt] / channel.sigma2_w[layout.kk]
    ju = _coeff_signs(coeffs)[0]
    if layout.has_alpha:
        alpha_bin = np.zeros((config.K, config.S, config.T), dtype=np.int8)
        hot = alpha_lnk >= 0.5
        alpha_bin[layout.kk[hot], layout.ss[hot], layout.tt[hot]] = 1
        a_tensor, active = _interior_alpha(alpha_bin, layout, config, demands, channel,
                                           np.asarray(rho_per_user, dtype=float), options)
        alpha_use = a_tensor[layout.kk, layout.ss, layout.tt]
        act_lnk = active[layout.kk, layout.ss, layout.tt]
    else:
        alpha_use = None
        act_lnk = np.ones(layout.n_links, dtype=bool)
    gamma = np.minimum(options.gamma_floor, 0.1 * hsig * bg * config.p_max_w)
    for k, d in enumerate(demands):
        eta = quality.min_snr_for_quality(float(rho_per_user[k]), d.Q_ssim_pct, coeffs, domain)
        mask = (layout.kk == k) & act_lnk
        gamma[mask] = max(1.1 * eta, options.gamma_floor)
    u0 = _u_bound(gamma, coeffs, ju) * 1.01
    return _pack_x(layout, config, channel, gamma, alpha_use,
                   rho_per_user if layout.has_rho else None, u0, u0, guide)


# ---------------------------------------------------------------------------
# rounding and repair


def round_rho(rho, options_pi):
    """Nearest compression option; ties pick the larger ratio (fewer slots)."""
    pi = np.asarray(options_pi)
    out = np.empty_like(np.asarray(rho, dtype=float))
    for i, r in enumerate(np.atleast_1d(rho)):
        d = np.abs(pi - r)
        best = d.min()
        out[i] = pi[np.where(np.abs(d - best) < 1e-15)[0]].max()
    return out


def _round_alpha(layout, config, alpha_lnk, threshold):
    """Threshold rounding with tie safety: a 0.5 tie rounds up only while the
    one-user-per-cell and one-subchannel-per-slot rules stay satisfiable."""
    alpha = np.zeros((config.K, config.S, config.T), dtype=np.int8)
    order = np.argsort(-alpha_lnk, kind="stable")
    cell_used = np.zeros((config.S, config.T), dtype=bool)
    slot_used = np.zeros((config.K, config.T), dtype=bool)
    for idx in order:
        a = alpha_lnk[idx]
        if a < threshold:
            break
        k, s, t = layout.kk[idx], layout.ss[idx], layout.tt[idx]
        if abs(a - threshold) < 1e-12 and (cell_used[s, t] or slot_used[k, t]):
            continue
        if cell_used[s, t] or slot_used[k, t]:
            # fractional overlap cannot survive rounding; drop the weaker link
            continue
        alpha[k, s, t] = 1
        cell_used[s, t] = True
        slot_used[k, t] = True
    return alpha


def _repair_counts(alpha, config, demands, channel, rho_disc, relaxed=None):
    """Greedily add the best remaining pre-deadline cells until every user
    covers its slot requirement; raises when no cell is left."""
    alpha = alpha.copy()
    for k, d in enumerate(demands):
        need = required_slots(d.L_images, config.N_symbols, float(rho_disc[k]),
                              config.B_hz, config.tau_s)
        need_n = max(int(np.ceil(need - 1e-9)), 1)
        while int(alpha[k, :, : d.D_slots].sum()) < need_n:
            free_s, free_t = np.where(
                (~alpha.any(axis=0)[:, : d.D_slots])
                & (~alpha[k].any(axis=0)[None, : d.D_slots])
                & (channel.h[k, :, : d.D_slots] > 0)
            )
            if free_s.size == 0:
                raise InfeasibleAfterRoundingError(
                    f"user {k}: rounded association cannot cover "
                    f"{need_n} pre-deadline slots", family="C7", relaxed=relaxed,
                )
            gains = channel.h[k][(free_s, free_t)]
            j = int(np.argmax(gains))
            alpha[k, free_s[j], free_t[j]] = 1
    return alpha


def _tighten_powers(alpha, config, demands, channel, rho_disc, coeffs, domain):
    """Exact per-link power: the minimum SNR meeting the quality target."""
    p = np.zeros_like(channel.h)
    for k, d in enumerate(demands):
        mask = alpha[k] > 0
        if not mask.any():
            continue
        eta = quality.min_snr_for_quality(float(rho_disc[k]), d.Q_ssim_pct, coeffs, domain)
        p[k][mask] = eta * channel.sigma2_w[k] / channel.h[k][mask]
    return p


# ---------------------------------------------------------------------------
# public pipeline


def solve_jcrra(config, demands, channel, coeffs=None, options=None, domain=None) -> "JcrraRun":
    """Full pipeline with per-phase diagnostics.

    Raises JcrraInfeasibleError / InfeasibleAfterRoundingError on instances
    that cannot be served; otherwise the returned solution has passed the
    exact feasibility evaluation.
    """
    coeffs = coeffs or quality.default_coefficients()
    options = options or JcrraOptions()
    domain = domain or quality.QualityDomain()
    demands = validate_demands(config, demands)

    layout, gamma0, alpha0, rho0, u0 = initial_point(config, demands, channel, coeffs,
                                                     options, domain)
    cost_table, eta_table = _decoupled_cost_table(config, demands, channel, coeffs, domain)
    guide = _prepare_guide(layout, config, demands, channel, coeffs, domain, options,
                           cost_table, eta_table, rho0)
    # incumbent: the initializer's own discrete solution, exactly powered
    incumbent = None
    try:
        rho_inc = round_rho(rho0, config.Pi)
        inc_alpha = np.zeros((config.K, config.S, config.T), dtype=np.int8)
        hot = alpha0 >= 0.5
        inc_alpha[layout.kk[hot], layout.ss[hot], layout.tt[hot]] = 1
        inc_alpha = _repair_counts(inc_alpha, config, demands, channel, rho_inc)
        inc_p = _tighten_powers(inc_alpha, config, demands, channel, rho_inc, coeffs, domain)
        cand = AllocationSolution.from_parts(alpha=inc_alpha, p_w=inc_p,
                                             rho=np.asarray(rho_inc, dtype=float))
        rep = check_feasible(config, demands, channel, cand, coeffs, domain)
        if rep.ok:
            incumbent = cand.with_feasibility(rep)
    except JcrraInfeasibleError:
        incumbent = None
    phases = []

    # Phase A: joint relaxation
    trace_a, gamma, alpha_lnk, rho, u_nat = _run_phase(
        "A", layout, config, demands, channel, coeffs, options,
        gamma0, alpha0, rho0, u0, rho_fixed=rho0, max_iters=options.max_sca_iters,
        guide=guide,
    )
    phases.append(trace_a)
    relaxed_obj = trace_a.power_w[-1]
    relaxed_snapshot = (gamma.copy(), None if alpha_lnk is None else alpha_lnk.copy(),
                        None if rho is None else np.array(rho, dtype=float))

    # Phase B: snap compression, re-iterate with it fixed
    rho_disc = round_rho(rho if layout.has_rho else rho0, config.Pi)
    layout_b = _Layout(links=layout.links, n_u=layout.n_u, has_alpha=True,
                       has_rho=False, K=config.K)
    u_nat = np.maximum(u_nat, _u_bound(gamma, coeffs, _coeff_signs(coeffs)[0]) * (1 + 1e-9))
    try:
        trace_b, gamma, alpha_lnk, _, u_nat = _run_phase(
            "B", layout_b, config, demands, channel, coeffs, options,
            gamma, alpha_lnk, rho_disc, u_nat, rho_fixed=rho_disc,
            max_iters=options.max_sca_iters, guide=guide,
        )
    except JcrraInfeasibleError as exc:
        if incumbent is not None:
            return _finish_with_incumbent(incumbent, phases, relaxed_obj)
        raise InfeasibleAfterRoundingError(
            f"compression rounding left no feasible association: {exc}",
            family=exc.family, relaxed=relaxed_snapshot,
        ) from exc
    phases.append(trace_b)

    # Phase C: round the association, optimize powers only
    try:
        alpha_bin = _round_alpha(layout_b, config, alpha_lnk, options.rounding_threshold)
        alpha_bin = _repair_counts(alpha_bin, config, demands, channel, rho_disc,
                                   relaxed=relaxed_snapshot)
    except InfeasibleAfterRoundingError:
        if incumbent is not None:
            return _finish_with_incumbent(incumbent, phases, relaxed_obj)
        raise
    act_k, act_s, act_t = np.nonzero(alpha_bin)
    layout_c = _Layout(links=np.stack([act_k, act_s, act_t], axis=1),
                       n_u=layout.n_u, has_alpha=False, has_rho=False, K=config.K)
    # map phase-B SNRs onto the surviving links; repaired links start fresh
    gamma_map = {}
    for i in range(layout_b.n_links):
        gamma_map[(layout_b.kk[i], layout_b.ss[i], layout_b.tt[i])] = gamma[i]
    gamma_c = np.empty(layout_c.n_links)
    for i in range(layout_c.n_links):
        key = (layout_c.kk[i], layout_c.ss[i], layout_c.tt[i])
        eta = quality.min_snr_for_quality(float(rho_disc[layout_c.kk[i]]),
                                          demands[layout_c.kk[i]].Q_ssim_pct, coeffs, domain)
        gamma_c[i] = max(gamma_map.get(key, 0.0), 1.05 * eta, options.gamma_floor)
    u_c = _u_bound(gamma_c, coeffs, _coeff_signs(coeffs)[0]) * 1.01
    trace_c, gamma_c, _, _, _ = _run_phase(
        "C", layout_c, config, demands, channel, coeffs, options,
        gamma_c, None, rho_disc, u_c, rho_fixed=rho_disc,
        max_iters=options.max_sca_iters,
    )
    phases.append(trace_c)

    # exact power polish and validation
    solution = None
    try:
        p = _tighten_powers(alpha_bin, config, demands, channel, rho_disc, coeffs, domain)
        if (p > config.p_max_w + 1e-12).any() or (
            p.sum(axis=(0, 1)) > config.p_max_w + 1e-9
        ).any():
            raise InfeasibleAfterRoundingError(
                "power budget violated after rounding", family="C4",
                relaxed=relaxed_snapshot,
            )
        cand = AllocationSolution.from_parts(alpha=alpha_bin, p_w=p,
                                             rho=np.asarray(rho_disc, dtype=float))
        report = check_feasible(config, demands, channel, cand, coeffs, domain)
        if not report.ok:
            raise InfeasibleAfterRoundingError(
                f"final validation failed: {report.summary()}",
                family=",".join(report.violated()), relaxed=relaxed_snapshot,
            )
        solution = cand.with_feasibility(report)
    except InfeasibleAfterRoundingError:
        if incumbent is None:
            raise
    # incumbent safeguard: the SCA path must not end worse than its seed
    incumbent_used = False
    if solution is None or (
        incumbent is not None and incumbent.objective_w < solution.objective_w
    ):
        solution = incumbent
        incumbent_used = True
    if options.strict_checks:
        _check_activity(solution, config, demands, channel, coeffs, domain)
    return JcrraRun(
        solution=solution,
        phases=phases,
        sca_iterations=trace_a.iterations,
        converged=trace_a.converged,
        relaxed_objective_w=relaxed_obj,
        surrogate_gap_worst=max(ph.surrogate_gap for ph in phases),
        incumbent_used=incumbent_used,
    )


def _finish_with_incumbent(incumbent, phases, relaxed_obj):
    return JcrraRun(
        solution=incumbent,
        phases=phases,
        sca_iterations=phases[0].iterations if phases else 0,
        converged=phases[0].converged if phases else False,
        relaxed_objective_w=relaxed_obj,
        surrogate_gap_worst=max((ph.surrogate_gap for ph in phases), default=-np.inf),
        incumbent_used=True,
    )


def _check_activity(solution, config, demands, channel, coeffs, domain):
    """Quality holds with equality on every active link whose minimum SNR is
    interior; links whose target is free at zero SNR carry zero power."""
    for k, d in enumerate(demands):
        mask = solution.alpha[k] > 0
        if not mask.any():
            continue
        eta = quality.min_snr_for_quality(float(solution.rho[k]), d.Q_ssim_pct, coeffs, domain)
        gam = solution.p_w[k][mask] * channel.h[k][mask] / channel.sigma2_w[k]
        if eta <= 0.0:
            if (solution.p_w[k][mask] != 0.0).any():
                raise AssertionError(f"user {k}: free-quality link carries power")
            continue
        fq = quality.f_q(np.full(gam.shape, float(solution.rho[k])), gam, coeffs)
        if np.abs(fq - d.Q_ssim_pct).max() > 1e-3:
            raise AssertionError(
                f"user {k}: active link quality not tight "
                f"(worst off by {np.abs(fq - d.Q_ssim_pct).max():.2e}%)"
            )


def run(config, demands, channel, coeffs=None, options=None, domain=None) -> AllocationSolution:
    """Joint compression and resource allocation; returns the final solution."""
    return solve_jcrra(config, demands, channel, coeffs, options, domain).solution
