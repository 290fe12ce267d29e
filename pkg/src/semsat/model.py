"""Problem data types, constraint predicates, and exact solution evaluation.

Units: powers in watts, bandwidth in Hz, slot duration in seconds, quality in
SSIM percent.  All types are immutable after construction and safe to share
across parallel workers; operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quality

POWER_SUM_TOL_W = 1e-9
SSIM_MARGIN_TOL_PCT = 1e-6


class InvalidArgumentError(ValueError):
    """Malformed or out-of-contract input."""


def watts_to_dbm(p_w):
    return 10.0 * np.log10(p_w) + 30.0


def dbm_to_watts(p_dbm):
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def _frozen_array(x, dtype=float):
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SystemConfig:
    """Scenario dimensions and shared radio parameters."""

    K: int
    S: int
    T: int
    tau_s: float
    B_total_hz: float
    p_max_w: float
    N_symbols: float
    Pi: tuple[float, ...]

    def __post_init__(self):
        if min(self.K, self.S, self.T) < 1 or len(self.Pi) < 1:
            raise InvalidArgumentError("K, S, T and the option count must be >= 1")
        if min(self.tau_s, self.B_total_hz, self.p_max_w, self.N_symbols) <= 0:
            raise InvalidArgumentError("tau_s, B_total_hz, p_max_w, N_symbols must be > 0")
        pi = tuple(float(v) for v in self.Pi)
        if any(b <= a for a, b in zip(pi, pi[1:])):
            raise InvalidArgumentError("compression options must be strictly ascending")
        if pi[0] <= 1.0:
            raise InvalidArgumentError("compression ratios must exceed 1 (source longer than code)")
        object.__setattr__(self, "Pi", pi)

    @property
    def B_hz(self) -> float:
        return self.B_total_hz / self.S

    @property
    def n_options(self) -> int:
        return len(self.Pi)

    def median_option(self) -> float:
        return self.Pi[(len(self.Pi) - 1) // 2]


@dataclass(frozen=True)
class UserDemand:
    L_images: int
    Q_ssim_pct: float
    D_slots: int

    def __post_init__(self):
        if self.L_images < 1:
            raise InvalidArgumentError("L_images must be >= 1")
        if not 0.0 < self.Q_ssim_pct <= 100.0:
            raise InvalidArgumentError("Q_ssim_pct must be in (0, 100]")
        if self.D_slots < 1:
            raise InvalidArgumentError("D_slots must be >= 1")


def validate_demands(config: SystemConfig, demands) -> tuple[UserDemand, ...]:
    demands = tuple(demands)
    if len(demands) != config.K:
        raise InvalidArgumentError(f"expected {config.K} demands, got {len(demands)}")
    for k, d in enumerate(demands):
        if d.D_slots > config.T:
            raise InvalidArgumentError(f"user {k}: deadline {d.D_slots} exceeds horizon T={config.T}")
    return demands


@dataclass(frozen=True)
class ChannelTensor:
    """Dimensionless power gains h[k, s, t] and per-user noise power in watts."""

    h: np.ndarray
    sigma2_w: np.ndarray

    def __post_init__(self):
        h = _frozen_array(self.h)
        s2 = _frozen_array(self.sigma2_w)
        if h.ndim != 3:
            raise InvalidArgumentError("h must have shape (K, S, T)")
        if s2.shape != (h.shape[0],):
            raise InvalidArgumentError("sigma2_w must have one entry per user")
        if not np.isfinite(h).all() or (h < 0).any():
            raise InvalidArgumentError("gains must be finite and non-negative")
        if not np.isfinite(s2).all() or (s2 <= 0).any():
            raise InvalidArgumentError("noise powers must be finite and positive")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "sigma2_w", s2)

    @property
    def shape(self):
        return self.h.shape


def snr(p_w, h, sigma2_w):
    """Received SNR p*h/sigma^2; linear in the transmit power."""
    p = np.asarray(p_w, dtype=float)
    g = np.asarray(h, dtype=float)
    s2 = np.asarray(sigma2_w, dtype=float)
    if not (np.isfinite(p).all() and np.isfinite(g).all() and np.isfinite(s2).all()):
        raise InvalidArgumentError("snr inputs must be finite")
    if (p < 0).any() or (g < 0).any() or (s2 <= 0).any():
        raise InvalidArgumentError("snr requires p >= 0, h >= 0, sigma2 > 0")
    out = p * g / s2
    return float(out) if out.ndim == 0 else out


def required_slots(L_images, N_symbols, rho, B_hz, tau_s):
    """Real-valued slot count L*N / (rho * B * tau) needed to ship all symbols."""
    if rho <= 0:
        raise InvalidArgumentError("rho must be positive")
    if min(L_images, N_symbols, B_hz, tau_s) <= 0:
        raise InvalidArgumentError("all inputs must be positive")
    return (L_images * N_symbols) / (rho * B_hz * tau_s)


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    ok: bool
    worst_violation: float
    detail: str = ""


@dataclass(frozen=True)
class FeasibilityReport:
    checks: tuple[ConstraintCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def check(self, name) -> ConstraintCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def ok_except(self, *names) -> bool:
        return all(c.ok for c in self.checks if c.name not in names)

    def violated(self):
        return [c.name for c in self.checks if not c.ok]

    def summary(self) -> str:
        return ", ".join(f"{c.name}:{'ok' if c.ok else f'viol={c.worst_violation:.3g}'}" for c in self.checks)


@dataclass(frozen=True)
class AllocationSolution:
    """Association, powers, and compression choices plus the objective."""

    alpha: np.ndarray
    p_w: np.ndarray
    rho: np.ndarray
    objective_w: float
    feasibility: FeasibilityReport | None = None

    def __post_init__(self):
        alpha = _frozen_array(self.alpha, dtype=np.int8)
        p = _frozen_array(self.p_w)
        rho = _frozen_array(self.rho)
        if alpha.shape != p.shape or alpha.ndim != 3 or rho.shape != (alpha.shape[0],):
            raise InvalidArgumentError("alpha/p_w must be (K,S,T) and rho length K")
        if not np.isin(alpha, (0, 1)).all():
            raise InvalidArgumentError("alpha entries must be 0 or 1")
        if (p < 0).any() or not np.isfinite(p).all():
            raise InvalidArgumentError("powers must be finite and non-negative")
        if ((p > 0) & (alpha == 0)).any():
            raise InvalidArgumentError("positive power on an unassociated link")
        if abs(self.objective_w - float(p.sum())) > 64 * np.finfo(float).eps * max(1.0, p.sum()):
            raise InvalidArgumentError("objective_w must equal the power sum")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "p_w", p)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_parts(cls, alpha, p_w, rho, feasibility=None):
        p = np.asarray(p_w, dtype=float)
        return cls(alpha=alpha, p_w=p, rho=rho, objective_w=float(p.sum()), feasibility=feasibility)

    def with_feasibility(self, report: FeasibilityReport) -> "AllocationSolution":
        return AllocationSolution(
            alpha=self.alpha, p_w=self.p_w, rho=self.rho,
            objective_w=self.objective_w, feasibility=report,
        )


def check_feasible(config, demands, channel, solution, quality_coeffs,
                   domain: quality.QualityDomain | None = None) -> FeasibilityReport:
    """Exact constraint-by-constraint evaluation of a candidate solution.

    The quality requirement is checked in its per-link form with the exact
    quality model on every associated link.  The delay requirement compares
    the integer count of assignments at or before the deadline against the
    real-valued slot requirement.
    """
    demands = validate_demands(config, demands)
    alpha = np.asarray(solution.alpha)
    p = np.asarray(solution.p_w)
    if alpha.shape != (config.K, config.S, config.T) or channel.h.shape != alpha.shape:
        raise InvalidArgumentError("solution/channel shape mismatch with config")

    checks = []
    pi = np.asarray(config.Pi)
    rho_dist = np.abs(solution.rho[:, None] - pi[None, :]).min(axis=1)
    c0_bad = float(rho_dist.max(initial=0.0))
    checks.append(ConstraintCheck("C0", c0_bad <= 1e-12, c0_bad, "rho in option set"))

    per_cell = alpha.sum(axis=0)  # (S, T)
    c1 = int(max(0, per_cell.max(initial=0) - 1))
    checks.append(ConstraintCheck("C1", c1 == 0, float(c1), "one user per (s,t)"))

    per_user_slot = alpha.sum(axis=1)  # (K, T)
    c2 = int(max(0, per_user_slot.max(initial=0) - 1))
    checks.append(ConstraintCheck("C2", c2 == 0, float(c2), "one sub-channel per (k,t)"))

    per_user = alpha.sum(axis=(1, 2))
    c3 = int(max(0, (1 - per_user).max(initial=0)))
    checks.append(ConstraintCheck("C3", c3 == 0, float(c3), "every user served"))

    slot_power = p.sum(axis=(0, 1))
    c4 = float(max(0.0, (slot_power - config.p_max_w).max(initial=0.0)))
    checks.append(ConstraintCheck("C4", c4 <= POWER_SUM_TOL_W, c4, "per-slot power budget"))

    c5 = float(np.max(p - alpha * config.p_max_w, initial=0.0))
    checks.append(ConstraintCheck("C5", c5 <= POWER_SUM_TOL_W, c5, "power only on associated links"))

    worst_q = 0.0
    mask = alpha > 0
    if mask.any():
        kk, ss, tt = np.nonzero(mask)
        gam = snr(p[kk, ss, tt], channel.h[kk, ss, tt], channel.sigma2_w[kk])
        qv = quality.f_q(solution.rho[kk], gam, quality_coeffs)
        qreq = np.asarray([demands[k].Q_ssim_pct for k in kk])
        worst_q = float(np.max(qreq - qv, initial=0.0))
    checks.append(ConstraintCheck("C6", worst_q <= SSIM_MARGIN_TOL_PCT, worst_q,
                                  "per-link expected SSIM"))

    worst_c7 = 0.0
    for k, d in enumerate(demands):
        need = required_slots(d.L_images, config.N_symbols, float(solution.rho[k]),
                              config.B_hz, config.tau_s)
        have = int(alpha[k, :, : d.D_slots].sum())
        worst_c7 = max(worst_c7, need - have)
    checks.append(ConstraintCheck("C7", worst_c7 <= 1e-9, float(worst_c7),
                                  "slots before deadline cover the requirement"))

    return FeasibilityReport(checks=tuple(checks))
