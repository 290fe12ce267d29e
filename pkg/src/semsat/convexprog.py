"""Structured convex subproblem representation.

A subproblem is a linear objective plus a list of smooth concave constraint
families, each stored row-vectorized in the canonical form g(x) >= 0:

  * box bounds on every variable (kept as lo/hi arrays),
  * affine rows (both <= and >= senses normalized at construction),
  * exp-of-affine rows  u - c0 - exp(w*x_p + d) >= 0,
  * reciprocal rows     a.x - c / x_r >= 0      (x_r kept positive by its box),
  * composite quality rows: the linearized per-link quality bound.

Rows are stored pre-divided by a positive row scale, so family values are
dimensionless residuals.  Variables are in solver units; `var_scale` maps
them back to natural units.  An optional block structure (uniform blocks plus
a small border) lets the solver assemble Newton systems without ever forming
a dense Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class BlockStructure:
    """Uniform variable blocks [b*size, (b+1)*size) followed by border vars."""

    n_blocks: int
    block_size: int
    n_border: int

    @property
    def n_vars(self) -> int:
        return self.n_blocks * self.block_size + self.n_border


@dataclass
class AffineRows:
    """Scaled affine constraints g = const + sum(val * x[idx]) >= 0."""

    label: str
    indptr: np.ndarray
    idx: np.ndarray
    val: np.ndarray
    const: np.ndarray
    scale: np.ndarray
    coupling: bool = True
    # local (non-coupling) structured form: per-row dense block gradient
    block: np.ndarray | None = None
    gblk: np.ndarray | None = None  # (R, block_size) gradient wrt block vars

    def __post_init__(self):
        self.row_of_entry = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))

    @property
    def n_rows(self) -> int:
        return self.const.shape[0]

    def values(self, x):
        contrib = self.val * x[self.idx]
        return self.const + np.bincount(self.row_of_entry, weights=contrib, minlength=self.n_rows)


@dataclass
class ExpAffineRows:
    """Rows su*x[iu] - c0 - exp(w*x[ip] + d) >= 0 (scaled)."""

    label: str
    iu: np.ndarray
    su: np.ndarray
    ip: np.ndarray
    w: np.ndarray
    d: np.ndarray
    c0: np.ndarray
    scale: np.ndarray
    coupling: bool = False
    block: np.ndarray | None = None
    iu_off: np.ndarray | None = None  # per-row offset of the u var in its block
    ip_off: int = 0  # offset of the p var within its block (uniform)

    @property
    def n_rows(self) -> int:
        return self.iu.shape[0]

    def exp_term(self, x):
        return np.exp(np.clip(self.w * x[self.ip] + self.d, -700.0, 700.0))

    def values(self, x):
        return self.su * x[self.iu] - self.c0 - self.exp_term(x)


@dataclass
class ReciprocalRows:
    """Rows const + sum(val * x[idx]) - c / x[ir] >= 0 (scaled)."""

    label: str
    indptr: np.ndarray
    idx: np.ndarray
    val: np.ndarray
    const: np.ndarray
    ir: np.ndarray
    c: np.ndarray
    scale: np.ndarray
    coupling: bool = True

    def __post_init__(self):
        self.row_of_entry = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))

    @property
    def n_rows(self) -> int:
        return self.const.shape[0]

    def values(self, x):
        lin = self.const + np.bincount(self.row_of_entry, weights=self.val * x[self.idx], minlength=self.n_rows)
        return lin - self.c / x[self.ir]


@dataclass
class CompositeRows:
    """Linearized per-link quality rows (scaled by the quality requirement).

    g = const + lin_rho*rho + sum_e c_exp*exp(a4e*rho) + sum_j ku*x_u
        + sum_m cu*exp(a4u*rho) / (d0 + d1*gamma) - q*alpha  >= 0,
    gamma = g_of_p * x[ip].  Terms with no rho / alpha variable fold those
    pieces into the constants (has_rho / has_alpha flags).
    """

    label: str
    ip: np.ndarray
    g_of_p: np.ndarray
    const: np.ndarray
    scale: np.ndarray
    # alpha part
    has_alpha: bool
    ia: np.ndarray | None
    q: np.ndarray | None
    # rho part (border variable)
    has_rho: bool
    ir: np.ndarray | None
    lin_rho: np.ndarray | None
    c_exp: np.ndarray | None  # (Je,) coefficients of exact exp terms in rho
    a4_exp: np.ndarray | None
    # u part
    iu: np.ndarray | None  # (R, Ju)
    ku: np.ndarray | None  # (R, Ju)
    # quotient upper-bound part
    cu: np.ndarray | None  # (Jm,)
    a4u: np.ndarray | None
    d0: np.ndarray | None  # (R, Jm)
    d1: np.ndarray | None  # (R, Jm)
    rho_const: np.ndarray | None = None  # rho value when has_rho is False
    coupling: bool = False
    block: np.ndarray | None = None
    ip_off: int = 0
    ia_off: int = -1
    iu_off: np.ndarray | None = None
    den_eps: float = 1e-6

    @property
    def n_rows(self) -> int:
        return self.ip.shape[0]

    @property
    def n_u(self) -> int:
        return 0 if self.iu is None else self.iu.shape[1]

    @property
    def n_up(self) -> int:
        return 0 if self.cu is None else self.cu.shape[0]

    def rho_of(self, x):
        if self.has_rho:
            return x[self.ir]
        return self.rho_const

    def gamma_of(self, x):
        return self.g_of_p * x[self.ip]

    def values(self, x):
        rho = self.rho_of(x)
        g = self.const.copy()
        if self.has_rho:
            g += self.lin_rho * rho
            for ce, a4 in zip(self.c_exp, self.a4_exp):
                g += ce * np.exp(np.clip(a4 * rho, -700.0, 700.0))
        if self.n_u:
            g += np.einsum("rj,rj->r", self.ku, x[self.iu])
        if self.n_up:
            den = self.d0 + self.d1 * self.gamma_of(x)[:, None]
            bad = den < self.den_eps
            den = np.where(bad, np.inf, den)
            eu = np.exp(np.clip(np.outer(rho, self.a4u), -700.0, 700.0)) if self.has_rho else self._eu_fixed
            g += (self.cu * eu / den).sum(axis=1)
            g = np.where(bad.any(axis=1), -np.inf, g)
        if self.has_alpha:
            g -= self.q * x[self.ia]
        return g

    def __post_init__(self):
        if not self.has_rho and self.n_up:
            # exp(a4u * rho) is constant when rho is fixed
            self._eu_fixed = np.exp(np.clip(np.outer(self.rho_const, self.a4u), -700.0, 700.0))


@dataclass
class ConvexSubproblem:
    """Linear objective, boxes, constraint families, and layout metadata."""

    n: int
    objective: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    families: list
    var_scale: np.ndarray
    var_names: list | None = None
    blocks: BlockStructure | None = None

    def n_constraints(self) -> int:
        n_box = int(np.isfinite(self.lo).sum() + np.isfinite(self.hi).sum())
        return n_box + sum(f.n_rows for f in self.families)

    def unscale(self, x) -> np.ndarray:
        return x * self.var_scale

    def dump(self, x_point=None) -> str:
        """Human-readable listing for reproducing solver failures."""
        lines = [f"convex subproblem: {self.n} vars, {self.n_constraints()} constraints"]
        names = self.var_names or [f"x{i}" for i in range(self.n)]
        for i in range(self.n):
            lines.append(
                f"  var {names[i]}: obj={self.objective[i]!r} box=[{self.lo[i]!r}, {self.hi[i]!r}]"
                f" scale={self.var_scale[i]!r}"
            )
        for fam in self.families:
            lines.append(f"  family {fam.label} ({type(fam).__name__}): {fam.n_rows} rows")
            if isinstance(fam, (AffineRows, ReciprocalRows)):
                for r in range(fam.n_rows):
                    sl = slice(fam.indptr[r], fam.indptr[r + 1])
                    terms = " + ".join(
                        f"{v!r}*{names[j]}" for j, v in zip(fam.idx[sl], fam.val[sl])
                    )
                    extra = f" - {fam.c[r]!r}/{names[fam.ir[r]]}" if isinstance(fam, ReciprocalRows) else ""
                    lines.append(f"    [{r}] {fam.const[r]!r} + {terms}{extra} >= 0")
            elif isinstance(fam, ExpAffineRows):
                for r in range(fam.n_rows):
                    lines.append(
                        f"    [{r}] {fam.su[r]!r}*{names[fam.iu[r]]} - {fam.c0[r]!r}"
                        f" - exp({fam.w[r]!r}*{names[fam.ip[r]]} + {fam.d[r]!r}) >= 0"
                    )
            elif isinstance(fam, CompositeRows):
                for r in range(min(fam.n_rows, 200)):
                    rho_part = names[fam.ir[r]] if fam.has_rho else f"rho={fam.rho_const[r]!r}"
                    lines.append(
                        f"    [{r}] quality row: p={names[fam.ip[r]]} {rho_part}"
                        f" const={fam.const[r]!r} gamma_coef={fam.g_of_p[r]!r}"
                    )
        if x_point is not None:
            lines.append(f"  point: {np.array2string(np.asarray(x_point), threshold=50)}")
        return "\n".join(lines)
