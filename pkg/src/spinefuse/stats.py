"""Paired significance testing for registration-variant comparisons.

Implements the Shapiro-Wilk normality test (Royston's AS R94
approximation, valid for 3 <= n <= 5000), the Wilcoxon signed-rank test
with a normal approximation including tie and continuity corrections,
and Cohen's d for paired samples.  compare_icp bundles the three into a
report for fitness and RMSE columns of two registration variants.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateSample

# Polynomial coefficients from Royston's algorithm for the two largest
# weights and for the moments of the transformed statistic.
_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -0.0006714)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)


def _poly(coeffs, x):
    return sum(c * x ** i for i, c in enumerate(coeffs))


def _norm_sf(z):
    return 0.5 * math.erfc(z / math.sqrt(2.0))


@dataclass
class ShapiroResult:
    statistic: float
    p_value: float
    n: int

    def as_dict(self):
        return {"statistic": self.statistic, "p_value": self.p_value,
                "n": self.n}


def shapiro_wilk(sample):
    """Shapiro-Wilk W and p-value for 3 <= n <= 5000 observations."""
    x = np.sort(np.asarray(sample, dtype=np.float64))
    n = x.size
    if n < 3 or n > 5000:
        raise DegenerateSample(f"shapiro_wilk needs 3 <= n <= 5000, got {n}")
    if x[-1] - x[0] == 0.0:
        raise DegenerateSample("all observations are equal")

    from scipy.special import ndtri
    m = ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    ssq_m = float(m @ m)
    c = m / math.sqrt(ssq_m)
    u = 1.0 / math.sqrt(n)

    a = np.empty(n)
    if n == 3:
        a[-1] = math.sqrt(0.5)
        a[0] = -a[-1]
        a[1] = 0.0
    else:
        a_n = _poly(_C1, u) + c[-1]
        if n > 5:
            a_n1 = _poly(_C2, u) + c[-2]
            phi = (ssq_m - 2.0 * m[-1] ** 2 - 2.0 * m[-2] ** 2) / \
                  (1.0 - 2.0 * a_n ** 2 - 2.0 * a_n1 ** 2)
            a[2:-2] = m[2:-2] / math.sqrt(phi)
            a[-2] = a_n1
            a[1] = -a_n1
        else:
            phi = (ssq_m - 2.0 * m[-1] ** 2) / (1.0 - 2.0 * a_n ** 2)
            a[1:-1] = m[1:-1] / math.sqrt(phi)
        a[-1] = a_n
        a[0] = -a_n

    xm = x - x.mean()
    w = float((a @ x) ** 2 / (xm @ xm))
    w = min(w, 1.0)

    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) -
                               math.asin(math.sqrt(0.75)))
        p = min(max(p, 0.0), 1.0)
        return ShapiroResult(statistic=w, p_value=p, n=n)

    if n <= 11:
        gamma = -2.273 + 0.459 * n
        arg = gamma - math.log(1.0 - w)
        if arg <= 0:
            return ShapiroResult(statistic=w, p_value=0.0, n=n)
        wprime = -math.log(arg)
        mu = _poly(_C3, n)
        sigma = math.exp(_poly(_C4, n))
    else:
        wprime = math.log(1.0 - w)
        ln_n = math.log(n)
        mu = _poly(_C5, ln_n)
        sigma = math.exp(_poly(_C6, ln_n))
    z = (wprime - mu) / sigma
    return ShapiroResult(statistic=w, p_value=_norm_sf(z), n=n)


@dataclass
class WilcoxonResult:
    statistic: float
    p_value: float
    n_used: int
    alternative: str

    def as_dict(self):
        return {"statistic": self.statistic, "p_value": self.p_value,
                "n_used": self.n_used, "alternative": self.alternative}


def wilcoxon_signed_rank(diffs, alternative="two-sided"):
    """Signed-rank test on paired differences (zeros dropped).

    Uses the normal approximation with average ranks for ties, the tie
    variance correction, and a 0.5 continuity correction.  alternative
    'greater' tests for positive median difference.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ConfigError(f"unknown alternative {alternative!r}")
    d = np.asarray(diffs, dtype=np.float64)
    d = d[d != 0.0]
    n = d.size
    if n < 6:
        raise DegenerateSample(
            f"wilcoxon needs >= 6 non-zero differences, got {n}")

    mag = np.abs(d)
    order = np.argsort(mag, kind="stable")
    ranks = np.empty(n)
    sorted_mag = mag[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_mag[j + 1] == sorted_mag[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1

    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    statistic = min(w_plus, w_minus)

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, counts = np.unique(sorted_mag, return_counts=True)
    var -= float(((counts ** 3 - counts) / 48.0).sum())
    if var <= 0:
        raise DegenerateSample("zero variance after tie correction")
    sd = math.sqrt(var)

    def sf_of(w_stat):
        # P(W <= w_stat) via the lower tail with continuity correction
        z = (w_stat - mean + 0.5) / sd
        return 1.0 - _norm_sf(z)

    if alternative == "two-sided":
        p = 2.0 * sf_of(statistic)
    elif alternative == "greater":
        p = sf_of(w_minus)
    else:
        p = sf_of(w_plus)
    return WilcoxonResult(statistic=statistic, p_value=min(p, 1.0),
                          n_used=n, alternative=alternative)


def cohens_d_paired(diffs):
    """Effect size for paired differences: mean / sample std (ddof 1)."""
    d = np.asarray(diffs, dtype=np.float64)
    if d.size < 2:
        raise DegenerateSample("cohens_d_paired needs >= 2 differences")
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateSample("zero variance in paired differences")
    return float(d.mean()) / sd


# ---------------------------------------------------------------------------
# Variant comparison
# ---------------------------------------------------------------------------

@dataclass
class PairedSample:
    """Matched per-scene metric values for two competing variants."""

    name_a: str
    name_b: str
    values_a: np.ndarray
    values_b: np.ndarray
    metric: str = "metric"

    def __post_init__(self):
        self.values_a = np.asarray(self.values_a, dtype=np.float64)
        self.values_b = np.asarray(self.values_b, dtype=np.float64)
        if self.values_a.shape != self.values_b.shape:
            raise ConfigError("paired samples must have equal length")

    @property
    def diffs(self):
        return self.values_a - self.values_b


@dataclass
class StatsReport:
    metric: str
    name_a: str
    name_b: str
    n: int
    mean_a: float
    mean_b: float
    shapiro: dict | None
    wilcoxon: dict | None
    cohens_d: float | None
    notes: list = field(default_factory=list)

    def as_dict(self):
        return {"metric": self.metric, "name_a": self.name_a,
                "name_b": self.name_b, "n": self.n,
                "mean_a": self.mean_a, "mean_b": self.mean_b,
                "shapiro": self.shapiro, "wilcoxon": self.wilcoxon,
                "cohens_d": self.cohens_d, "notes": list(self.notes)}


def analyze_paired(sample, alternative="two-sided"):
    """Run normality, signed-rank, and effect size on one paired sample."""
    d = sample.diffs
    notes = []
    shapiro = None
    try:
        shapiro = shapiro_wilk(d).as_dict()
    except DegenerateSample as exc:
        notes.append(f"shapiro: {exc}")
    wilcox = None
    try:
        wilcox = wilcoxon_signed_rank(d, alternative=alternative).as_dict()
    except DegenerateSample as exc:
        notes.append(f"wilcoxon: {exc}")
    d_eff = None
    try:
        d_eff = cohens_d_paired(d)
    except DegenerateSample as exc:
        notes.append(f"cohens_d: {exc}")
    return StatsReport(metric=sample.metric, name_a=sample.name_a,
                       name_b=sample.name_b, n=int(d.size),
                       mean_a=float(sample.values_a.mean()),
                       mean_b=float(sample.values_b.mean()),
                       shapiro=shapiro, wilcoxon=wilcox, cohens_d=d_eff,
                       notes=notes)


def compare_icp(results_a, results_b, name_a="variant_a", name_b="variant_b",
                alternative="two-sided"):
    """Compare two registration variants over matched scenes.

    results_* are sequences of objects (or dicts) exposing fitness and
    rmse.  Fitness pairs are always used; RMSE pairs where either side
    is non-finite (no correspondences) are excluded, with a note.
    """
    if len(results_a) != len(results_b):
        raise ConfigError("variant result lists must be matched by scene")

    def col(results, *names):
        out = []
        for r in results:
            for attr in names:
                v = r.get(attr) if isinstance(r, dict) else getattr(r, attr,
                                                                    None)
                if v is not None:
                    break
            else:
                raise ConfigError(f"result lacks any of {names}")
            out.append(float(v))
        return np.asarray(out)

    fit_a, fit_b = col(results_a, "fitness"), col(results_b, "fitness")
    rmse_a = col(results_a, "rmse", "inlier_rmse")
    rmse_b = col(results_b, "rmse", "inlier_rmse")

    reports = {"fitness": analyze_paired(
        PairedSample(name_a, name_b, fit_a, fit_b, metric="fitness"),
        alternative=alternative)}

    valid = np.isfinite(rmse_a) & np.isfinite(rmse_b)
    rmse_report = analyze_paired(
        PairedSample(name_a, name_b, rmse_a[valid], rmse_b[valid],
                     metric="rmse"),
        alternative=alternative)
    dropped = int((~valid).sum())
    if dropped:
        rmse_report.notes.append(
            f"excluded {dropped} scene pair(s) with non-finite rmse")
    reports["rmse"] = rmse_report
    return reports
