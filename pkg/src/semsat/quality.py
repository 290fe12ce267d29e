"""Expected-SSIM quality model for JSCC image delivery.

The model maps (compression ratio rho, link SNR gamma) to an expected SSIM
in percent through a sum of exponential and exponential-sigmoid terms.  It
also provides the first-order bound primitives used by the convex restriction
of the per-link quality constraint, the inverse map (minimum SNR reaching a
target quality), and a refitting routine.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

# Arguments of exp() are clamped here to keep evaluations finite; clamping is
# far outside the calibrated domain and is logged at debug level.
EXP_CLAMP = 700.0

# Minimum admissible denominator for the quotient upper bound.
ES_UPPER_DEN_EPS = 1e-6

# Per-step tolerance of the monotonicity pre-check.  The default coefficient
# set has a genuinely (but negligibly) decreasing tail in gamma of order
# 1e-6 SSIM-pct per SNR unit, so an exact check would reject it.
MONOTONE_STEP_TOL = 1e-6


class QualityModelError(ValueError):
    """Invalid arguments to a quality-model operation."""


class InfeasibleQualityError(QualityModelError):
    """Requested quality is unreachable anywhere on the SNR domain."""


class NonMonotoneModelError(QualityModelError):
    """Grid pre-check found the model decreasing in SNR beyond tolerance."""


class FitConvergenceError(RuntimeError):
    """Least-squares refit failed to converge; carries the best iterate."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


def _clamped_exp(z):
    z = np.asarray(z, dtype=float)
    clipped = np.clip(z, -EXP_CLAMP, EXP_CLAMP)
    if np.any(clipped != z):
        log.debug("exp argument clamped to +-%g", EXP_CLAMP)
    return np.exp(clipped)


@dataclass(frozen=True)
class QualityModelCoefficients:
    """Coefficient set (a_bar, rows of (a0, a1, a2, a3, a4) per term)."""

    a_bar: float
    a0: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    a4: np.ndarray

    def __post_init__(self):
        for name in ("a0", "a1", "a2", "a3", "a4"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.a0.ndim != 1 or self.n_terms < 1:
            raise QualityModelError("coefficient rows must form a non-empty 1-d table")
        for name in ("a1", "a2", "a3", "a4"):
            if getattr(self, name).shape != self.a0.shape:
                raise QualityModelError("coefficient columns must have equal length")
        if not np.isfinite(self.a_bar) or not all(
            np.isfinite(getattr(self, n)).all() for n in ("a0", "a1", "a2", "a3", "a4")
        ):
            raise QualityModelError("coefficients must be finite")

    @property
    def n_terms(self) -> int:
        return self.a0.shape[0]

    def as_matrix(self) -> np.ndarray:
        """Rows (a0, a1, a2, a3, a4), one per term."""
        return np.stack([self.a0, self.a1, self.a2, self.a3, self.a4], axis=1)


# Default coefficient table for the 64x64 EUROSAT-trained encoder family.
_DEFAULT_ROWS = np.array(
    [
        [126.216875, -15.5512520, -1.740186, 19.306749, -0.308751],
        [59.985122, -6.605492, -0.996148, 1.831855, 0.028218],
        [153.050377, 4.196036, -0.213359, -7.217142, -0.701829],
        [-206.696783, 9.487473, -1.375091, 3.405617, -0.549287],
        [-38.0243540, 6.00383, 0.663762, 5.409884, -0.339842],
        [-15.4042140, 6.49103, 4.730506, -1.064734, 0.0851],
    ]
)
_DEFAULT_A_BAR = 30.429844


def default_coefficients() -> QualityModelCoefficients:
    r = _DEFAULT_ROWS
    return QualityModelCoefficients(
        a_bar=_DEFAULT_A_BAR, a0=r[:, 0], a1=r[:, 1], a2=r[:, 2], a3=r[:, 3], a4=r[:, 4]
    )


@dataclass(frozen=True)
class QualityDomain:
    """Calibrated validity ranges of the fit (a guard, not a hard clamp)."""

    rho_range: tuple[float, float] = (2.0, 12.0)
    gamma_range: tuple[float, float] = (0.0, 25.0)

    def __post_init__(self):
        if not (self.rho_range[0] < self.rho_range[1]) or not (
            self.gamma_range[0] < self.gamma_range[1]
        ):
            raise QualityModelError("domain ranges must be non-degenerate")

    def contains(self, rho, gamma) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        gamma = np.asarray(gamma, dtype=float)
        return (
            (rho >= self.rho_range[0])
            & (rho <= self.rho_range[1])
            & (gamma >= self.gamma_range[0])
            & (gamma <= self.gamma_range[1])
        )


def f_q(rho, gamma, coeffs: QualityModelCoefficients):
    """Expected SSIM in percent at compression ratio rho and linear SNR gamma.

    Broadcasts over array inputs; scalar inputs return a float.
    """
    rho_a = np.asarray(rho, dtype=float)
    gam_a = np.asarray(gamma, dtype=float)
    if not (np.isfinite(rho_a).all() and np.isfinite(gam_a).all()):
        raise QualityModelError("rho and gamma must be finite")
    scalar = rho_a.ndim == 0 and gam_a.ndim == 0
    r = rho_a[..., None]
    g = gam_a[..., None]
    e_rho = _clamped_exp(coeffs.a4 * r)
    sig_den = 1.0 + _clamped_exp(-coeffs.a2 * g - coeffs.a3)
    out = coeffs.a_bar + np.sum(coeffs.a0 * e_rho + coeffs.a1 * e_rho / sig_den, axis=-1)
    return float(out) if scalar else out


def f_es_term(rho, gamma, j, coeffs: QualityModelCoefficients):
    """Single exponential-sigmoid term exp(a4 rho) / (1 + exp(-a2 g - a3))."""
    e_rho = _clamped_exp(coeffs.a4[j] * np.asarray(rho, dtype=float))
    den = 1.0 + _clamped_exp(-coeffs.a2[j] * np.asarray(gamma, dtype=float) - coeffs.a3[j])
    return e_rho / den


def check_monotone_in_gamma(rho, coeffs, domain, n_grid=2501, tol=MONOTONE_STEP_TOL):
    """Grid pre-check that f_q(rho, .) is non-decreasing on the gamma range."""
    lo, hi = domain.gamma_range
    grid = np.linspace(lo, hi, n_grid)
    vals = f_q(np.full(n_grid, float(rho)), grid, coeffs)
    worst = float(np.min(np.diff(vals)))
    if worst < -tol:
        raise NonMonotoneModelError(
            f"f_q(rho={rho}, .) decreases by {-worst:.3g} per grid step on "
            f"[{lo}, {hi}]; model unusable for SNR inversion"
        )


def min_snr_for_quality(rho, q_pct, coeffs, domain: QualityDomain, tol=1e-6):
    """Smallest gamma on the domain with f_q(rho, gamma) >= q_pct.

    Bisection to absolute tolerance `tol` on gamma, after a grid pre-check of
    monotonicity in gamma.  Raises InfeasibleQualityError when the target is
    unreachable at the top of the SNR range.
    """
    rho = float(rho)
    q = float(q_pct)
    lo, hi = domain.gamma_range
    check_monotone_in_gamma(rho, coeffs, domain)
    if f_q(rho, hi, coeffs) < q:
        raise InfeasibleQualityError(
            f"quality {q}% unreachable at rho={rho}: f_q at gamma={hi} is "
            f"{f_q(rho, hi, coeffs):.4f}%"
        )
    if f_q(rho, lo, coeffs) >= q:
        return lo
    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        if f_q(rho, mid, coeffs) >= q:
            b = mid
        else:
            a = mid
    return b


def tangent_exp(x, a, b, x_i):
    """First-order tangent of exp(a*x + b) at x_i: a e^{a x_i + b} (x - x_i + 1/a).

    Globally lower-bounds the exponential (convexity); exact at x = x_i.
    """
    a = np.asarray(a, dtype=float)
    if np.any(a == 0.0):
        raise QualityModelError("tangent_exp requires a != 0 (constant case is exact)")
    x = np.asarray(x, dtype=float)
    x_i = np.asarray(x_i, dtype=float)
    out = a * _clamped_exp(a * x_i + b) * (x - x_i + 1.0 / a)
    return float(out) if out.ndim == 0 else out


def es_lower(rho, u, a4, rho_i, u_i):
    """Affine lower bound of exp(a4*rho)/u, tangent at (rho_i, u_i), u_i > 0."""
    u_i = np.asarray(u_i, dtype=float)
    if np.any(u_i <= 0.0):
        raise QualityModelError("es_lower requires u_i > 0")
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    base = _clamped_exp(np.asarray(a4, dtype=float) * np.asarray(rho_i, dtype=float)) / u_i
    out = base * (a4 * rho - u / u_i - a4 * np.asarray(rho_i, dtype=float) + 2.0)
    return float(out) if out.ndim == 0 else out


def es_upper_denominator(gamma, a2, a3, gamma_i):
    """Denominator 1 + tangent of exp(-a2*g - a3) at gamma_i (affine in gamma)."""
    return 1.0 + tangent_exp(gamma, -np.asarray(a2, dtype=float), -np.asarray(a3, dtype=float), gamma_i)


def es_upper(rho, gamma, a2, a3, a4, gamma_i):
    """Upper bound exp(a4*rho) / (1 + tangent of exp(-a2*g - a3) at gamma_i).

    Valid (and an upper bound of the exponential-sigmoid term) wherever the
    denominator stays positive; raises QualityModelError below the guard.
    """
    den = es_upper_denominator(gamma, a2, a3, gamma_i)
    if np.any(np.asarray(den) < ES_UPPER_DEN_EPS):
        raise QualityModelError(
            "es_upper denominator below guard; shrink the SNR step or add a trust region"
        )
    out = _clamped_exp(np.asarray(a4, dtype=float) * np.asarray(rho, dtype=float)) / den
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class FitResult:
    coeffs: QualityModelCoefficients
    rmse: float
    n_starts_converged: int
    best_start: int


def _model_eval(theta, rho, gamma, n_terms):
    a_bar = theta[0]
    rows = theta[1:].reshape(n_terms, 5)
    a0, a1, a2, a3, a4 = rows.T
    e_rho = _clamped_exp(np.outer(rho, a4))
    sig = 1.0 / (1.0 + _clamped_exp(-(np.outer(gamma, a2) + a3)))
    return a_bar + e_rho @ a0 + (e_rho * sig) @ a1


def _model_jacobian(theta, rho, gamma, n_terms):
    rows = theta[1:].reshape(n_terms, 5)
    a0, a1, a2, a3, a4 = rows.T
    e_rho = _clamped_exp(np.outer(rho, a4))
    sig = 1.0 / (1.0 + _clamped_exp(-(np.outer(gamma, a2) + a3)))
    dsig = sig * (1.0 - sig)
    n = rho.shape[0]
    jac = np.empty((n, 1 + 5 * n_terms))
    jac[:, 0] = 1.0
    cols = jac[:, 1:].reshape(n, n_terms, 5)
    cols[:, :, 0] = e_rho
    cols[:, :, 1] = e_rho * sig
    cols[:, :, 2] = a1 * e_rho * dsig * gamma[:, None]
    cols[:, :, 3] = a1 * e_rho * dsig
    cols[:, :, 4] = rho[:, None] * e_rho * (a0 + a1 * sig)
    return jac


def _linear_init(a2, a3, a4, rho, gamma, y):
    """Least-squares solve of the linear coefficients given the nonlinear ones."""
    e_rho = _clamped_exp(np.outer(rho, a4))
    sig = 1.0 / (1.0 + _clamped_exp(-(np.outer(gamma, a2) + a3)))
    design = np.concatenate([np.ones((rho.shape[0], 1)), e_rho, e_rho * sig], axis=1)
    sol, *_ = np.linalg.lstsq(design, y, rcond=None)
    return sol[0], sol[1 : 1 + a4.shape[0]], sol[1 + a4.shape[0] :]


def fit_coefficients(samples, n_terms=6, seed=0, n_starts=16, max_iter=200):
    """Fit the quality model to (rho, gamma, ssim_pct) samples.

    Damped Gauss-Newton (Levenberg style) over the full parameter vector,
    restarted from `n_starts` seeded random initializations whose linear
    coefficients are pre-solved by least squares.  Deterministic given seed.
    Only predictive equivalence is sought, not coefficient identifiability.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 3:
        raise QualityModelError("samples must be an (n, 3) array of (rho, gamma, ssim)")
    n_params = 1 + 5 * n_terms
    if samples.shape[0] < 10 * n_params:
        raise QualityModelError(
            f"need at least {10 * n_params} samples for {n_params} parameters"
        )
    rho, gamma, y = samples.T
    rng = np.random.default_rng(seed)
    g_lo, g_hi = float(gamma.min()), float(gamma.max())

    best = None
    best_sse = np.inf
    best_start = -1
    n_converged = 0
    for start in range(n_starts):
        a4 = rng.uniform(-1.2, 0.3, size=n_terms)
        a4[np.abs(a4) < 1e-3] = 1e-3  # keep the exp terms non-degenerate
        crossing = rng.uniform(g_lo, g_hi, size=n_terms)
        a2 = rng.uniform(0.05, 5.0, size=n_terms) * rng.choice([-1.0, 1.0], size=n_terms)
        a3 = -a2 * crossing
        a_bar, a0, a1 = _linear_init(a2, a3, a4, rho, gamma, y)
        theta = np.concatenate([[a_bar], np.stack([a0, a1, a2, a3, a4], axis=1).ravel()])

        lam = 1e-3
        resid = _model_eval(theta, rho, gamma, n_terms) - y
        sse = float(resid @ resid)
        converged = False
        for _ in range(max_iter):
            jac = _model_jacobian(theta, rho, gamma, n_terms)
            jtj = jac.T @ jac
            jtr = jac.T @ resid
            if np.linalg.norm(jtr, np.inf) < 1e-10 * max(1.0, np.sqrt(sse)):
                converged = True
                break
            stepped = False
            for _ in range(40):
                try:
                    delta = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj) + 1e-12), -jtr)
                except np.linalg.LinAlgError:
                    lam *= 10.0
                    continue
                trial = theta + delta
                t_resid = _model_eval(trial, rho, gamma, n_terms) - y
                t_sse = float(t_resid @ t_resid)
                if np.isfinite(t_sse) and t_sse < sse:
                    theta, resid, sse = trial, t_resid, t_sse
                    lam = max(lam * 0.3, 1e-12)
                    stepped = True
                    break
                lam *= 10.0
            if not stepped:
                converged = sse < np.inf
                break
            if sse <= 1e-18 * samples.shape[0]:
                converged = True
                break
        if converged:
            n_converged += 1
        if sse < best_sse:
            best_sse = sse
            best = theta.copy()
            best_start = start

    if best is None or not np.isfinite(best_sse):
        raise FitConvergenceError("all starts diverged", best=best)
    rows = best[1:].reshape(n_terms, 5)
    coeffs = QualityModelCoefficients(
        a_bar=float(best[0]),
        a0=rows[:, 0],
        a1=rows[:, 1],
        a2=rows[:, 2],
        a3=rows[:, 3],
        a4=rows[:, 4],
    )
    rmse = float(np.sqrt(best_sse / samples.shape[0]))
    return FitResult(coeffs=coeffs, rmse=rmse, n_starts_converged=n_converged, best_start=best_start)


def save_coefficients(path, coeffs: QualityModelCoefficients):
    """Write a plain-text table: one row per term (j a0 a1 a2 a3 a4 a_bar)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# j a0 a1 a2 a3 a4 a_bar\n")
        for j in range(coeffs.n_terms):
            fh.write(
                f"{j + 1} {coeffs.a0[j]!r} {coeffs.a1[j]!r} {coeffs.a2[j]!r} "
                f"{coeffs.a3[j]!r} {coeffs.a4[j]!r} {coeffs.a_bar!r}\n"
            )


def load_coefficients(path) -> QualityModelCoefficients:
    rows = []
    a_bar = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 7:
                raise QualityModelError(f"bad coefficient row: {line!r}")
            rows.append([float(p) for p in parts[1:6]])
            a_bar = float(parts[6])
    if not rows or a_bar is None:
        raise QualityModelError(f"no coefficient rows found in {path}")
    arr = np.asarray(rows)
    return QualityModelCoefficients(
        a_bar=a_bar, a0=arr[:, 0], a1=arr[:, 1], a2=arr[:, 2], a3=arr[:, 3], a4=arr[:, 4]
    )
