"""Exhaustive-enumeration exact solver for desk-size instances.

Enumerates every admissible binary association (per-cell assignment patterns
filtered by the one-subchannel-per-user-slot rule and full coverage) crossed
with every compression combination, sets each active link's power in closed
form to the minimum meeting the user's quality target, and keeps the best
feasible objective.  Ground truth for the iterative solver and baselines.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import quality
from .model import (
    AllocationSolution,
    InvalidArgumentError,
    check_feasible,
    required_slots,
    validate_demands,
)

ENUM_MAX_CELLS = 12
ENUM_MAX_OPTIONS = 4


class EnumerationBoundError(InvalidArgumentError):
    """Instance too large for exhaustive search."""


def _slot_patterns(K, S):
    """Per-slot assignments: each sub-channel serves a user or nobody, and no
    user appears twice within the slot."""
    out = []
    for combo in itertools.product(range(K + 1), repeat=S):
        users = [u for u in combo if u > 0]
        if len(users) == len(set(users)):
            out.append(combo)
    return out


def _min_snr_table(config, demands, coeffs, domain, snr_solver):
    """gamma*[k, v] for each user and compression option; inf if unreachable."""
    K, V = config.K, len(config.Pi)
    table = np.full((K, V), np.inf)
    for k, d in enumerate(demands):
        for v, rho in enumerate(config.Pi):
            try:
                table[k, v] = snr_solver(rho, d.Q_ssim_pct, coeffs, domain)
            except quality.InfeasibleQualityError:
                table[k, v] = np.inf
    return table


def _grid_min_snr(rho, q_pct, coeffs, domain, step=1e-5):
    """Independent minimum-SNR search: coarse grid scan plus local refine.

    Used by the target-SNR formulation so the two oracle routes do not share
    the bisection code path.
    """
    lo, hi = domain.gamma_range
    grid = np.arange(lo, hi + 1e-4, 1e-2)
    vals = quality.f_q(np.full(grid.shape, float(rho)), grid, coeffs)
    ok = vals >= q_pct
    if not ok.any() or not ok[-1]:
        if quality.f_q(float(rho), hi, coeffs) < q_pct:
            raise quality.InfeasibleQualityError(f"{q_pct}% unreachable at rho={rho}")
    first = int(np.argmax(ok))
    if first == 0:
        return lo
    a = grid[first - 1]
    b = grid[first]
    fine = np.arange(a, b + step, step)
    fvals = quality.f_q(np.full(fine.shape, float(rho)), fine, coeffs)
    fok = fvals >= q_pct
    return float(fine[int(np.argmax(fok))]) if fok.any() else float(b)


def enumerate_optimal(config, demands, channel, coeffs, domain=None, *,
                      formulation="closed-form"):
    """Globally optimal solution by exhaustion, or None when infeasible.

    formulation="closed-form" sets active-link powers from the bisection
    inverse of the quality model; "target-snr" re-derives each user's minimum
    SNR by an independent grid search over the auxiliary target variable (the
    two must agree, which is the executable form of the problem-equivalence
    argument).  Deterministic lexicographic tie-break.
    """
    demands = validate_demands(config, demands)
    domain = domain or quality.QualityDomain()
    K, S, T = config.K, config.S, config.T
    if K * S * T > ENUM_MAX_CELLS or len(config.Pi) > ENUM_MAX_OPTIONS:
        raise EnumerationBoundError(
            f"enumeration bounded at {ENUM_MAX_CELLS} cells / {ENUM_MAX_OPTIONS} "
            f"options; got K*S*T={K * S * T}, V={len(config.Pi)}"
        )
    snr_solver = (
        quality.min_snr_for_quality if formulation == "closed-form" else _grid_min_snr
    )
    gamma_star = _min_snr_table(config, demands, coeffs, domain, snr_solver)
    V = len(config.Pi)
    need = np.array(
        [
            [
                required_slots(d.L_images, config.N_symbols, rho, config.B_hz, config.tau_s)
                for rho in config.Pi
            ]
            for d in demands
        ]
    )  # (K, V)
    deadlines = np.array([d.D_slots for d in demands])
    # inverse gain: a zero-gain cell still counts toward the slot requirement
    # when the target SNR is zero, so it costs inf only at positive targets
    with np.errstate(divide="ignore"):
        inv_h = channel.sigma2_w[:, None, None] / channel.h

    def link_powers(g, alpha):
        with np.errstate(invalid="ignore"):
            p = g[:, None, None] * inv_h * alpha
        return np.where(g[:, None, None] == 0.0, 0.0, p)

    slot_pats = _slot_patterns(K, S)
    combos = list(itertools.product(range(V), repeat=K))
    best = None

    for pat_idx, pattern in enumerate(itertools.product(slot_pats, repeat=T)):
        alpha = np.zeros((K, S, T), dtype=np.int8)
        for t, pat in enumerate(pattern):
            for s, u in enumerate(pat):
                if u > 0:
                    alpha[u - 1, s, t] = 1
        per_user = alpha.sum(axis=(1, 2))
        if (per_user < 1).any():
            continue  # every user must be served
        cnt_dl = np.array([int(alpha[k, :, : deadlines[k]].sum()) for k in range(K)])
        for c_idx, combo in enumerate(combos):
            g = gamma_star[np.arange(K), combo]
            if not np.isfinite(g).all():
                continue
            if (cnt_dl + 1e-9 < need[np.arange(K), combo]).any():
                continue  # pre-deadline coverage short
            p = link_powers(g, alpha)
            obj = float(p.sum())
            if not np.isfinite(obj):
                continue  # positive target on a dead link
            if p.max() > config.p_max_w + 1e-12:
                continue
            if (p.sum(axis=(0, 1)) > config.p_max_w + 1e-9).any():
                continue
            key = (obj, pat_idx, c_idx)
            if best is None or key < best[0]:
                best = (key, alpha.copy(), np.asarray([config.Pi[v] for v in combo]), g)
    if best is None:
        return None
    _, alpha, rho, g = best
    p = link_powers(g, alpha)
    solution = AllocationSolution.from_parts(alpha=alpha, p_w=p, rho=rho)
    report = check_feasible(config, demands, channel, solution, coeffs, domain)
    return solution.with_feasibility(report)
