"""Group comparisons: summary statistics, two-sample KS, one-way ANOVA and Kruskal-Wallis.

The test statistics are computed here; only the reference distributions
(Kolmogorov, F, chi-square survival functions) come from scipy.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import special

REPORT_COLUMNS = (
    "feature", "group", "n", "mean", "median", "sd", "max",
    "ks_statistic", "ks_pvalue", "anova_f", "anova_pvalue", "kruskal_h", "kruskal_pvalue",
)


def _sample(a, name: str = "sample") -> np.ndarray:
    x = np.asarray(a, dtype=np.float64).ravel()
    if len(x) == 0:
        raise ValueError(f"{name} is empty")
    if np.isnan(x).any():
        raise ValueError(f"{name} contains NaN")
    return x


def average_ranks(x) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    n = len(x)
    while i < n:
        j = i
        while j + 1 < n and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sided two-sample KS statistic and asymptotic p-value."""
    a = np.sort(_sample(a, "a"))
    b = np.sort(_sample(b, "b"))
    na, nb = len(a), len(b)
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / na
    cdf_b = np.searchsorted(b, grid, side="right") / nb
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    en = math.sqrt(na * nb / (na + nb))
    p = float(special.kolmogorov(en * d)) if d > 0 else 1.0
    return d, min(max(p, 0.0), 1.0)


def _groups(groups: Sequence) -> list[np.ndarray]:
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    return [_sample(g, f"group {i}") for i, g in enumerate(groups)]


def anova_oneway(groups: Sequence) -> tuple[float, float]:
    """F statistic with (k-1, N-k) degrees of freedom and its p-value."""
    gs = _groups(groups)
    k = len(gs)
    n = sum(len(g) for g in gs)
    if n <= k:
        raise ValueError("need more observations than groups")
    grand = sum(g.sum() for g in gs) / n
    ssb = sum(len(g) * (g.mean() - grand) ** 2 for g in gs)
    ssw = sum(((g - g.mean()) ** 2).sum() for g in gs)
    if ssw == 0:
        if ssb == 0:
            raise ValueError("F is undefined: no variance within or between groups")
        return math.inf, 0.0
    f = (ssb / (k - 1)) / (ssw / (n - k))
    return float(f), float(special.fdtrc(k - 1, n - k, f))


def kruskal_wallis(groups: Sequence) -> tuple[float, float]:
    """Tie-corrected H statistic and its chi-square (k-1 df) p-value."""
    gs = _groups(groups)
    pooled = np.concatenate(gs)
    n = len(pooled)
    ranks = average_ranks(pooled)
    h = 0.0
    pos = 0
    for g in gs:
        r = ranks[pos:pos + len(g)]
        pos += len(g)
        h += r.sum() ** 2 / len(g)
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    _, counts = np.unique(pooled, return_counts=True)
    ties = float(np.sum(counts.astype(np.float64) ** 3 - counts))
    correction = 1.0 - ties / (float(n) ** 3 - n)
    if correction <= 0:
        raise ValueError("H is undefined: all observations are equal")
    h /= correction
    return float(h), float(special.chdtrc(len(gs) - 1, h))


@dataclass
class GroupSummary:
    n: int
    mean: float
    median: float
    sd: float | None
    max: float

    @classmethod
    def of(cls, x: np.ndarray) -> "GroupSummary":
        return cls(len(x), float(x.mean()), float(np.median(x)),
                   float(x.std(ddof=1)) if len(x) > 1 else None, float(x.max()))


@dataclass
class GroupComparison:
    feature: str
    groups: dict[str, GroupSummary] = field(default_factory=dict)
    ks_statistic: float | None = None
    ks_pvalue: float | None = None
    anova_f: float | None = None
    anova_pvalue: float | None = None
    kruskal_h: float | None = None
    kruskal_pvalue: float | None = None

    def rows(self) -> list[dict]:
        tests = {"ks_statistic": self.ks_statistic, "ks_pvalue": self.ks_pvalue,
                 "anova_f": self.anova_f, "anova_pvalue": self.anova_pvalue,
                 "kruskal_h": self.kruskal_h, "kruskal_pvalue": self.kruskal_pvalue}
        return [{"feature": self.feature, "group": g, "n": s.n, "mean": s.mean, "median": s.median,
                 "sd": s.sd, "max": s.max, **tests} for g, s in self.groups.items()]


def compare_report(rows: Sequence[Mapping], group_field: str, features: Sequence[str]) -> list[GroupComparison]:
    """One comparison per feature across the values of ``group_field``.

    Rows without a group value are ignored; rows whose feature value is
    missing are skipped for that feature. KS
    needs exactly two groups; tests that do not apply are left as None.
    """
    if not rows:
        raise ValueError("no rows to compare")
    for f in list(features) + [group_field]:
        if not any(f in r for r in rows):
            raise KeyError(f"missing column {f!r}")
    out = []
    for feat in features:
        by_group: dict[str, list[float]] = {}
        for r in rows:
            v = r.get(feat)
            if r.get(group_field) is None or v is None or (isinstance(v, float) and math.isnan(v)):
                continue
            by_group.setdefault(str(r[group_field]), []).append(float(v))
        names = sorted(by_group)
        samples = [np.array(by_group[g]) for g in names]
        comp = GroupComparison(feat, {g: GroupSummary.of(s) for g, s in zip(names, samples)})
        if len(samples) == 2:
            comp.ks_statistic, comp.ks_pvalue = ks_two_sample(*samples)
        if len(samples) >= 2:
            try:
                comp.anova_f, comp.anova_pvalue = anova_oneway(samples)
            except ValueError:
                pass
            try:
                comp.kruskal_h, comp.kruskal_pvalue = kruskal_wallis(samples)
            except ValueError:
                pass
        out.append(comp)
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    return str(v)


def write_report_csv(path: str | Path, comparisons: Sequence[GroupComparison]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for c in comparisons:
            for row in c.rows():
                w.writerow([_fmt(row[k]) for k in REPORT_COLUMNS])


def format_table(comparisons: Sequence[GroupComparison]) -> str:
    """Human-readable summary, one block per feature."""

    def num(v, spec=".4g"):
        return "n/a" if v is None else format(v, spec)

    lines = []
    for c in comparisons:
        lines.append(c.feature)
        for g, s in c.groups.items():
            lines.append(f"  {g:<12} n={s.n:<6} mean={num(s.mean):<10} median={num(s.median):<10} "
                         f"sd={num(s.sd):<10} max={num(s.max)}")
        lines.append(f"  KS D={num(c.ks_statistic)} p={num(c.ks_pvalue)}  "
                     f"ANOVA F={num(c.anova_f)} p={num(c.anova_pvalue)}  "
                     f"Kruskal-Wallis H={num(c.kruskal_h)} p={num(c.kruskal_pvalue)}")
    return "\n".join(lines) + "\n"
