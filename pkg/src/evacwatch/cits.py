"""Segmented regression on REX panels: ITS, controlled ITS and the delay sweep.

Observations are pooled (tower, bin) rows. Standard errors use a Newey-West
covariance whose lag products never pair rows from different towers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg, stats

from .errors import InputError, RankDeficiencyError, StatisticalError
from .metrics import TowerSeries
from .timebins import BIN_SECONDS, Window

log = logging.getLogger(__name__)

ITS_COLUMNS = ("Intercept", "T", "I0", "T_I0")
CITS_COLUMNS = ITS_COLUMNS + ("G", "GT", "GI0", "GT_I0")
DEFAULT_DELAY_MIN = 75
DEFAULT_DELAY_GRID = tuple(range(30, 121, 15))
Z975 = float(stats.norm.ppf(0.975))


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Regressors, response and panel bookkeeping for one fit.

    Rows are ordered by tower, then by time. ``panel`` gives each row's
    tower as an integer code so the HAC estimator can keep lags within a
    tower.
    """

    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    panel: np.ndarray
    t: np.ndarray
    n_bins: int
    intervention_bin: int
    delay_bins: int
    n_dropped: int = 0

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]


def _check_delay(delay_min: int) -> int:
    if delay_min < 0 or (delay_min * 60) % BIN_SECONDS:
        raise InputError(f"delay {delay_min} min is not a nonnegative multiple of 15 minutes")
    return int(delay_min * 60 // BIN_SECONDS)


def _timing(window: Window, intervention: int, delay_min: int, require_post: bool) -> tuple[int, int]:
    delay_bins = _check_delay(delay_min)
    if intervention not in window:
        raise InputError("intervention instant lies outside the model window")
    t_int = int((intervention - window.start) // BIN_SECONDS)
    if require_post and t_int + delay_bins >= window.n_bins:
        raise InputError("intervention plus delay falls beyond the model window")
    return t_int, delay_bins


def _its_block(t: np.ndarray, t_star: int) -> np.ndarray:
    post = (t >= t_star).astype(np.float64)
    return np.column_stack([np.ones_like(post), t.astype(np.float64), post, np.maximum(0, t - t_star).astype(np.float64)])


def _panel_rows(series: TowerSeries, window: Window | None) -> tuple[TowerSeries, np.ndarray, np.ndarray, np.ndarray, int]:
    if window is not None:
        series = series.restrict(window)
    n_t, n_b = series.values.shape
    t = np.tile(np.arange(n_b, dtype=np.int64), n_t)
    panel = np.repeat(np.arange(n_t, dtype=np.int64), n_b)
    y = series.values.reshape(-1)
    keep = ~np.isnan(y)
    return series, t[keep], panel[keep], y[keep], int((~keep).sum())


def build_its_design(
    series: TowerSeries,
    intervention: int,
    delay_min: int = DEFAULT_DELAY_MIN,
    window: Window | None = None,
    *,
    require_post: bool = True,
) -> DesignMatrix:
    """Columns [1, T, I0, T_I0] with T counted in bins from the window start.

    I0 switches on at intervention + delay and T_I0 counts bins since then.
    Rows with undefined REX are dropped and tallied.
    """
    series, t, panel, y, dropped = _panel_rows(series, window)
    if not series.towers:
        raise InputError("no towers to model")
    t_int, d = _timing(series.window, intervention, delay_min, require_post)
    X = _its_block(t, t_int + d)
    return DesignMatrix(X, y, ITS_COLUMNS, panel, t, series.window.n_bins, t_int, d, dropped)


def build_cits_design(
    affected: TowerSeries,
    control: TowerSeries,
    intervention: int,
    delay_min: int = DEFAULT_DELAY_MIN,
    window: Window | None = None,
    *,
    require_post: bool = True,
) -> DesignMatrix:
    """ITS columns plus G and its interactions GT, GI0, GT_I0 (G = 1 for affected towers)."""
    if not affected.towers:
        raise InputError("affected group is empty")
    if not control.towers:
        raise InputError("control group is empty")
    a, ta, pa, ya, da = _panel_rows(affected, window)
    c, tc, pc, yc, dc = _panel_rows(control, window)
    if a.window != c.window:
        raise InputError("affected and control series cover different windows")
    t_int, d = _timing(a.window, intervention, delay_min, require_post)
    t = np.concatenate([ta, tc])
    panel = np.concatenate([pa, pc + len(a.towers)])
    g = np.concatenate([np.ones(ta.size), np.zeros(tc.size)])
    its = _its_block(t, t_int + d)
    X = np.column_stack([its, g[:, None] * its])
    return DesignMatrix(X, np.concatenate([ya, yc]), CITS_COLUMNS, panel, t, a.window.n_bins, t_int, d, da + dc)


# ---------------------------------------------------------------------------
# estimation


@dataclass(frozen=True, eq=False)
class OlsFit:
    beta: np.ndarray
    residuals: np.ndarray
    rss: float
    r2: float
    adj_r2: float
    n: int
    k: int


def _dependent_columns(X: np.ndarray, names: Sequence[str]) -> list[str]:
    """Columns that lie in the span of the columns before them."""
    scale = np.linalg.norm(X, axis=0)
    dependent, kept = [], []
    for j in range(X.shape[1]):
        col = X[:, j]
        if scale[j] == 0:
            dependent.append(names[j])
            continue
        if kept:
            basis = X[:, kept]
            coef, *_ = np.linalg.lstsq(basis, col, rcond=None)
            resid = np.linalg.norm(col - basis @ coef)
            if resid <= 1e-9 * scale[j] * math.sqrt(X.shape[0]):
                dependent.append(names[j])
                continue
        kept.append(j)
    return dependent


def ols_fit(design: DesignMatrix) -> OlsFit:
    """Least squares via a thin QR factorization.

    Raises RankDeficiencyError naming the columns that are linear
    combinations of earlier ones.
    """
    X, y = design.X, design.y
    n, k = X.shape
    if n <= k:
        raise StatisticalError(f"{n} observations are not enough for {k} coefficients")
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0) or np.linalg.matrix_rank(X / np.where(norms == 0, 1, norms)) < k:
        raise RankDeficiencyError(_dependent_columns(X, design.names) or list(design.names))
    q, r = np.linalg.qr(X, mode="reduced")
    beta = linalg.solve_triangular(r, q.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    # exact constant response: mean subtraction leaves rounding dust, not variance
    tss = float(np.sum((y - y.mean()) ** 2)) if np.ptp(y) > 0 else 0.0
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k)
    return OlsFit(beta, resid, rss, r2, adj, n, k)


def default_hac_lag(n_bins: int) -> int:
    """Bartlett rule of thumb floor(4 (n/100)^(2/9))."""
    return int(math.floor(4.0 * (n_bins / 100.0) ** (2.0 / 9.0)))


def newey_west_cov(
    X: np.ndarray,
    residuals: np.ndarray,
    lag: int,
    panel: np.ndarray | None = None,
    series_length: int | None = None,
) -> np.ndarray:
    """Bartlett-weighted HAC sandwich with lags taken within each panel unit.

    Rows of one unit must be contiguous and time ordered. Lag-j products pair
    row i with row i - j only when both belong to the same unit.
    """
    if lag < 0 or int(lag) != lag:
        raise ValueError("HAC lag must be a nonnegative integer")
    n = X.shape[0]
    panel = np.zeros(n, dtype=np.int64) if panel is None else np.asarray(panel)
    if series_length is None:
        series_length = int(np.bincount(panel - panel.min()).max()) if n else 0
    if lag >= series_length:
        raise StatisticalError(f"HAC lag {lag} is not shorter than the per-tower series length {series_length}")
    u = X * residuals[:, None]
    S = u.T @ u
    for j in range(1, lag + 1):
        same = panel[j:] == panel[:-j]
        gj = u[j:][same].T @ u[:-j][same]
        S += (1.0 - j / (lag + 1.0)) * (gj + gj.T)
    bread = np.linalg.inv(X.T @ X)
    cov = bread @ S @ bread
    return (cov + cov.T) / 2.0


def classical_cov(X: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    n, k = X.shape
    sigma2 = float(residuals @ residuals) / (n - k)
    return sigma2 * np.linalg.inv(X.T @ X)


def bic(rss: float, n: int, k: int) -> float:
    """N ln(RSS/N) + k ln N; a perfect fit returns -inf with a warning."""
    if n <= k:
        raise ValueError("BIC needs more observations than coefficients")
    if rss < 0:
        raise ValueError("residual sum of squares is negative")
    if rss == 0:
        log.warning("residual sum of squares is zero; BIC is -inf")
        return float("-inf")
    return n * math.log(rss / n) + k * math.log(n)


def _stars(p: float) -> str:
    return "***" if p < 0.001 else "**" if p < 0.01 else "*" if p < 0.05 else ""


@dataclass(frozen=True, eq=False)
class RegressionResult:
    names: tuple[str, ...]
    beta: np.ndarray
    cov_hac: np.ndarray
    r2: float
    adj_r2: float
    bic: float
    n: int
    lag: int
    delay_minutes: int
    n_dropped: int = 0
    model: str = "cits"
    rss: float = float("nan")

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov_hac), 0.0, None))

    @property
    def ci_lo(self) -> np.ndarray:
        return self.beta - Z975 * self.se

    @property
    def ci_hi(self) -> np.ndarray:
        return self.beta + Z975 * self.se

    @property
    def p_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(self.se > 0, np.abs(self.beta) / self.se, np.inf)
        return 2.0 * stats.norm.sf(z)

    def coef(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])

    def to_dict(self) -> dict:
        coef = {}
        for i, name in enumerate(self.names):
            coef[name] = {
                "est": float(self.beta[i]),
                "se": float(self.se[i]),
                "ci_lo": float(self.ci_lo[i]),
                "ci_hi": float(self.ci_hi[i]),
                "p": float(self.p_values[i]),
            }
        return {
            "model": self.model,
            "coef": coef,
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "bic": self.bic,
            "n": self.n,
            "lag": self.lag,
            "delay_minutes": self.delay_minutes,
            "n_dropped": self.n_dropped,
        }


def fit(design: DesignMatrix, lag: int | None = None, delay_min: int = DEFAULT_DELAY_MIN, model: str = "cits") -> RegressionResult:
    ols = ols_fit(design)
    lag = default_hac_lag(design.n_bins) if lag is None else int(lag)
    cov = newey_west_cov(design.X, ols.residuals, lag, design.panel, design.n_bins)
    return RegressionResult(
        design.names,
        ols.beta,
        cov,
        ols.r2,
        ols.adj_r2,
        bic(ols.rss, ols.n, ols.k),
        ols.n,
        lag,
        delay_min,
        design.n_dropped,
        model,
        ols.rss,
    )


def fit_its(series: TowerSeries, intervention: int, delay_min: int = DEFAULT_DELAY_MIN, lag: int | None = None, window: Window | None = None) -> RegressionResult:
    return fit(build_its_design(series, intervention, delay_min, window), lag, delay_min, "its")


def fit_cits(
    affected: TowerSeries,
    control: TowerSeries,
    intervention: int,
    delay_min: int = DEFAULT_DELAY_MIN,
    lag: int | None = None,
    window: Window | None = None,
) -> RegressionResult:
    return fit(build_cits_design(affected, control, intervention, delay_min, window), lag, delay_min, "cits")


@dataclass(frozen=True)
class SweepResult:
    delays: tuple[int, ...]
    bic: tuple[float, ...]
    adj_r2: tuple[float, ...]
    best_delay: int

    def rows(self) -> list[dict]:
        return [{"delay_minutes": d, "bic": b, "adj_r2": a} for d, b, a in zip(self.delays, self.bic, self.adj_r2)]

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("delay_minutes,bic,adj_r2,selected\n")
            for d, b, a in zip(self.delays, self.bic, self.adj_r2):
                fh.write(f"{d},{b!r},{a!r},{int(d == self.best_delay)}\n")


def delay_sweep(
    series: TowerSeries,
    intervention: int,
    delays: Sequence[int] = DEFAULT_DELAY_GRID,
    window: Window | None = None,
) -> SweepResult:
    """One ITS fit per delay; the minimum BIC wins, ties going to the smaller delay."""
    if not delays:
        raise ValueError("delay grid is empty")
    ordered = sorted(set(int(d) for d in delays))
    bics, adjs = [], []
    for d in ordered:
        ols = ols_fit(build_its_design(series, intervention, d, window))
        bics.append(bic(ols.rss, ols.n, ols.k))
        adjs.append(ols.adj_r2)
    best = ordered[int(np.argmin(bics))]
    return SweepResult(tuple(ordered), tuple(bics), tuple(adjs), best)


def format_table(results: Mapping[str, RegressionResult], digits: int = 3) -> str:
    """Plain-text table: one column per fit, estimate with stars over its CI."""
    labels = list(results)
    if not labels:
        return ""
    names = max((r.names for r in results.values()), key=len)
    rows: list[list[str]] = [["", *labels], ["N", *(str(results[l].n) for l in labels)]]
    rows.append(["R2", *(f"{results[l].r2:.{digits}f}" for l in labels)])
    for name in names:
        est_row, ci_row = [name], [""]
        for l in labels:
            r = results[l]
            if name not in r.names:
                est_row.append("")
                ci_row.append("")
                continue
            i = r.names.index(name)
            est_row.append(f"{r.beta[i]:.{digits}f}{_stars(r.p_values[i])}")
            ci_row.append(f"({r.ci_lo[i]:.{digits}f}, {r.ci_hi[i]:.{digits}f})")
        rows.extend([est_row, ci_row])
    widths = [max(len(row[c]) for row in rows) for c in range(len(rows[0]))]
    lines = ["  ".join(cell.rjust(w) if c else cell.ljust(w) for c, (cell, w) in enumerate(zip(row, widths))) for row in rows]
    lines.append("* p<0.05; ** p<0.01; *** p<0.001 (normal approximation, HAC standard errors)")
    return "\n".join(lines) + "\n"
