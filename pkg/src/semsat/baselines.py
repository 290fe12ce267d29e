"""Greedy reference schemes: fixed-ratio semantic delivery and JPEG delivery.

Both schemes associate users to cells by descending channel gain.  The
semantic scheme then sets each active link's power to hit the minimum SNR
meeting the user's quality target at the fixed compression ratio; the JPEG
scheme waterfills per user until the Shannon-capacity sum carries the
compressed payload.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import quality
from .model import (
    AllocationSolution,
    ChannelTensor,
    ConstraintCheck,
    FeasibilityReport,
    InvalidArgumentError,
    SystemConfig,
    UserDemand,
    check_feasible,
    required_slots,
    validate_demands,
)

WATERFILL_REL_TOL = 1e-4  # 0.01% of the bit target
WATERFILL_MAX_BISECTIONS = 100


@dataclass(frozen=True)
class JpegCalibration:
    """Mean compressed size per image at each achievable SSIM target."""

    ssim_pct: np.ndarray
    bits_per_image: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.ssim_pct, dtype=float)
        b = np.asarray(self.bits_per_image, dtype=float)
        if s.size < 2 or s.shape != b.shape:
            raise InvalidArgumentError("calibration needs at least two aligned rows")
        if (np.diff(s) <= 0).any():
            raise InvalidArgumentError("SSIM targets must be strictly increasing")
        if (b <= 0).any():
            raise InvalidArgumentError("bit sizes must be positive")
        if (np.diff(b) < 0).any():
            raise InvalidArgumentError("bits must not decrease with the SSIM target")
        s.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "ssim_pct", s)
        object.__setattr__(self, "bits_per_image", b)

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                rows.append((float(row[0]), float(row[1])))
        if not rows:
            raise InvalidArgumentError(f"no calibration rows in {path}")
        arr = np.asarray(rows)
        return cls(ssim_pct=arr[:, 0], bits_per_image=arr[:, 1])


def required_bits(q_pct, calibration: JpegCalibration):
    """Linear interpolation of the calibration table at the SSIM target."""
    s = calibration.ssim_pct
    if not (s[0] <= q_pct <= s[-1]):
        raise InvalidArgumentError(
            f"SSIM target {q_pct}% outside the calibration range [{s[0]}, {s[-1]}]"
        )
    return float(np.interp(q_pct, s, calibration.bits_per_image))


def greedy_association_counts(channel, config, demands, counts):
    """Max-gain-first association with per-user connection counts.

    Zeroes each user's channel beyond its deadline, then repeatedly assigns
    the largest remaining gain, clearing the cell's column (one user per
    cell) and the user's row at that slot (one sub-channel per user-slot).
    Ties break at the lowest (k, s, t).  Returns (alpha, remaining counts).
    """
    h = channel.h.copy()
    remaining = np.asarray(counts, dtype=int).copy()
    for k, d in enumerate(demands):
        h[k, :, d.D_slots :] = 0.0
        if remaining[k] == 0:
            h[k, :, :] = 0.0
    alpha = np.zeros(channel.h.shape, dtype=np.int8)
    while True:
        flat = int(np.argmax(h))
        if h.flat[flat] <= 0.0:
            break
        k, s, t = np.unravel_index(flat, h.shape)
        alpha[k, s, t] = 1
        h[k, :, t] = 0.0
        h[:, s, t] = 0.0
        remaining[k] -= 1
        if remaining[k] == 0:
            h[k, :, :] = 0.0
        if (remaining <= 0).all():
            break
    return alpha, remaining


def greedy_jscc(channel, config, demands, rho_bar, coeffs, *,
                domain=None, extra_connections=0):
    """Fixed-compression greedy scheme.

    Connection counts are the ceiling of the real-valued slot requirement at
    the common ratio rho_bar; association is max-gain-first; per-link power
    achieves the minimum SNR reaching each user's quality target.  Returns a
    solution whose feasibility report flags unplaced connections or budget
    violations instead of raising.
    """
    demands = validate_demands(config, demands)
    if not any(abs(rho_bar - v) < 1e-12 for v in config.Pi):
        raise InvalidArgumentError(f"rho_bar {rho_bar} is not an available option")
    domain = domain or quality.QualityDomain()
    counts = np.array(
        [
            int(np.ceil(required_slots(d.L_images, config.N_symbols, rho_bar,
                                       config.B_hz, config.tau_s)))
            + extra_connections
            for d in demands
        ]
    )
    alpha, remaining = greedy_association_counts(channel, config, demands, counts)
    p = np.zeros_like(channel.h)
    quality_ok = True
    for k, d in enumerate(demands):
        mask = alpha[k] > 0
        if not mask.any():
            continue
        try:
            eta = quality.min_snr_for_quality(rho_bar, d.Q_ssim_pct, coeffs, domain)
        except quality.InfeasibleQualityError:
            quality_ok = False
            continue
        # target SNR interpretation of the power rule: p = eta sigma^2 / h
        p[k][mask] = eta * channel.sigma2_w[k] / channel.h[k][mask]
    solution = AllocationSolution.from_parts(alpha=alpha, p_w=p,
                                             rho=np.full(config.K, float(rho_bar)))
    report = check_feasible(config, demands, channel, solution, coeffs, domain)
    extra = []
    if (remaining > 0).any():
        extra.append(ConstraintCheck("association-complete", False,
                                     float(remaining.max()), "unplaced connections"))
    if not quality_ok:
        extra.append(ConstraintCheck("quality-reachable", False, np.inf,
                                     "target unreachable at rho_bar"))
    if extra:
        report = FeasibilityReport(checks=report.checks + tuple(extra))
    return solution.with_feasibility(report)


def waterfill(links, target_bits, B_hz, tau_s, p_max_per_link=None):
    """Water level bisection for a per-user link set.

    links: array of (h, sigma2) rows.  Allocates p = max(0, nu - sigma2/h)
    (capped per link when a budget map is given) and bisects the water level
    nu until the Shannon sum B*tau*sum(log2(1 + p h / sigma2)) matches
    target_bits within 0.01%.  Returns (powers, achieved_bits, feasible).
    """
    links = np.asarray(links, dtype=float)
    if links.ndim != 2 or links.shape[1] != 2 or links.shape[0] == 0:
        raise InvalidArgumentError("links must be a non-empty (n, 2) array of (h, sigma2)")
    if target_bits <= 0:
        raise InvalidArgumentError("target_bits must be positive")
    h = links[:, 0]
    s2 = links[:, 1]
    if (h <= 0).any() or (s2 <= 0).any():
        raise InvalidArgumentError("links need positive gain and noise")
    floor = s2 / h
    caps = None if p_max_per_link is None else np.asarray(p_max_per_link, dtype=float)

    def powers_at(nu):
        p = np.maximum(0.0, nu - floor)
        if caps is not None:
            p = np.minimum(p, caps)
        return p

    def bits_at(nu):
        p = powers_at(nu)
        return B_hz * tau_s * np.log2(1.0 + p * h / s2).sum()

    hi = floor.min() + 1.0
    while bits_at(hi) < target_bits and hi < 1e30:
        hi *= 2.0
        if caps is not None and (powers_at(hi) >= caps - 1e-15).all():
            break
    max_bits = bits_at(hi)
    if max_bits < target_bits * (1.0 - WATERFILL_REL_TOL):
        return powers_at(hi), max_bits, False
    lo = 0.0
    for _ in range(WATERFILL_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if bits_at(mid) >= target_bits:
            hi = mid
        else:
            lo = mid
        if abs(bits_at(hi) - target_bits) <= WATERFILL_REL_TOL * target_bits:
            break
    p = powers_at(hi)
    return p, float(bits_at(hi)), True


def greedy_jpeg(channel, config, demands, calibration, *, coeffs=None, domain=None):
    """JPEG-compression greedy scheme.

    Association fills every usable cell in descending gain order (no
    connection counts), then each user's links are waterfilled to carry the
    total compressed payload.  The per-slot budget is enforced afterwards by
    uniform down-scaling, with any bit deficit flagged in the report.
    """
    demands = validate_demands(config, demands)
    targets = np.array([d.L_images * required_bits(d.Q_ssim_pct, calibration) for d in demands])
    alpha, _ = greedy_association_counts(
        channel, config, demands, counts=np.full(config.K, channel.h.size + 1)
    )
    p = np.zeros_like(channel.h)
    deliverable = np.zeros(config.K, dtype=bool)
    for k in range(config.K):
        mask = alpha[k] > 0
        if not mask.any():
            continue
        hh = channel.h[k][mask]
        ss2 = np.full(hh.shape, channel.sigma2_w[k])
        pw, achieved, ok = waterfill(
            np.stack([hh, ss2], axis=1),
            targets[k],
            config.B_hz,
            config.tau_s,
            p_max_per_link=np.full(hh.shape, config.p_max_w),
        )
        p[k][mask] = pw
        deliverable[k] = ok

    # per-slot budget: scale down overweight slots uniformly
    slot_tot = p.sum(axis=(0, 1))
    over = slot_tot > config.p_max_w
    if over.any():
        factors = np.ones(config.T)
        factors[over] = config.p_max_w / slot_tot[over]
        p = p * factors[None, None, :]

    achieved_bits = np.array(
        [
            config.B_hz * config.tau_s
            * np.log2(1.0 + p[k] * channel.h[k] / channel.sigma2_w[k]).sum()
            for k in range(config.K)
        ]
    )
    deficit = np.maximum(0.0, targets - achieved_bits)
    rho = np.full(config.K, float(config.Pi[0]))  # placeholder: no semantic coding here
    solution = AllocationSolution.from_parts(alpha=alpha, p_w=p, rho=rho)
    checks = []
    structural = check_feasible(config, demands, channel, solution,
                                coeffs or quality.default_coefficients(),
                                domain or quality.QualityDomain())
    for c in structural.checks:
        if c.name in ("C6", "C7", "C0"):
            continue  # semantic-quality families do not apply to JPEG delivery
        checks.append(c)
    payload_ok = bool((deficit <= WATERFILL_REL_TOL * np.maximum(targets, 1.0)).all()
                      and deliverable.all())
    checks.append(ConstraintCheck("payload", payload_ok,
                                  float(deficit.max(initial=0.0)), "delivered bits >= target"))
    return solution.with_feasibility(FeasibilityReport(checks=tuple(checks)))
