"""Statistical analysis: correlation tests, normality, node matrices.

The distribution plumbing (normal quantile, regularized incomplete
beta) is self-contained so the package keeps numpy as its only runtime
dependency; the test suite cross-checks every routine against an
independent implementation.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import StatsError
from .metrics import rankdata
from .tensor import Tensor

# ---------------------------------------------------------------------------
# distribution helpers


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def norm_ppf(p: float) -> float:
    """Standard normal quantile: Hastings start, Newton polish."""
    if not 0.0 < p < 1.0:
        raise StatsError(f"norm_ppf needs p in (0, 1), got {p}")
    tail = min(p, 1.0 - p)
    t = math.sqrt(-2.0 * math.log(tail))
    z = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) / \
        (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t ** 3)
    x = -z if p < 0.5 else z
    for _ in range(4):
        err = norm_cdf(x) - p
        pdf = _norm_pdf(x)
        if pdf == 0.0:
            break
        x -= err / pdf
    return x


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 200):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-16:
            break
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                     + a * math.log(x) + b * math.log(1.0 - x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Upper tail of Student's t."""
    if df <= 0:
        raise StatsError(f"t_sf needs df > 0, got {df}")
    p = 0.5 * betainc_reg(df / 2.0, 0.5, df / (df + t * t))
    return p if t >= 0 else 1.0 - p


# ---------------------------------------------------------------------------
# correlation tests


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise StatsError(f"pearson needs matching 1-D arrays, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise StatsError(f"pearson needs at least 2 observations, got {x.size}")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        raise StatsError("pearson is undefined for a constant input")
    return float(xc @ yc) / denom


@dataclass
class SpearmanResult:
    rho: float
    pvalue: float
    method: str


EXACT_LIMIT = 12


def spearman(x, y, method: str = "auto") -> SpearmanResult:
    """Rank correlation with average ranks on ties.

    method "t" uses the two-sided t approximation, "exact" enumerates
    the full permutation distribution (n <= 12; factorial cost), "auto"
    picks exact for n <= 9 and t otherwise.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise StatsError(f"spearman needs matching 1-D arrays, got {x.shape} and {y.shape}")
    n = x.size
    if n < 4:
        raise StatsError(f"spearman needs at least 4 observations, got {n}")
    if method not in ("auto", "t", "exact"):
        raise StatsError(f"spearman method must be auto, t or exact, not {method!r}")
    if method == "auto":
        method = "exact" if n <= 9 else "t"
    rx = rankdata(x)
    ry = rankdata(y)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise StatsError("spearman is undefined for a constant input")
    rho = pearson(rx, ry)

    if method == "t":
        if abs(rho) >= 1.0:
            return SpearmanResult(rho, 0.0, "t")
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        return SpearmanResult(rho, 2.0 * t_sf(abs(t), n - 2), "t")

    if n > EXACT_LIMIT:
        raise StatsError(f"exact spearman is limited to n <= {EXACT_LIMIT}, got {n}")
    # the permutation statistic reduces to the dot product of centered ranks
    rxc = rx - rx.mean()
    ryc = ry - ry.mean()
    scale = math.sqrt(float(rxc @ rxc) * float(ryc @ ryc))
    observed = abs(float(rxc @ ryc))
    tol = 1e-9 * scale
    count = 0
    total = 0
    chunk: list[tuple] = []
    chunk_size = 40320

    def flush():
        nonlocal count, total
        if not chunk:
            return
        dots = np.abs(np.asarray(chunk, dtype=np.float64) @ rxc)
        count += int((dots >= observed - tol).sum())
        total += len(chunk)
        chunk.clear()

    for perm in itertools.permutations(ryc):
        chunk.append(perm)
        if len(chunk) == chunk_size:
            flush()
    flush()
    return SpearmanResult(rho, count / total, "exact")


# ---------------------------------------------------------------------------
# Shapiro-Wilk (Royston's 1995 algorithm)

_C1 = (-2.706056, 4.434685, -2.071190, -0.147981, 0.221157)
_C2 = (-3.582633, 5.682633, -1.752461, -0.293762, 0.042981)


def _poly5(coeffs, u, tail):
    c5, c4, c3, c2, c1 = coeffs
    return c5 * u ** 5 + c4 * u ** 4 + c3 * u ** 3 + c2 * u * u + c1 * u + tail


def shapiro_wilk(x) -> tuple[float, float]:
    """Returns (W, p) for 3 <= n <= 5000 observations."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    n = x.size
    if n < 3:
        raise StatsError(f"shapiro_wilk needs at least 3 observations, got {n}")
    if n > 5000:
        raise StatsError(f"shapiro_wilk supports at most 5000 observations, got {n}")
    if x[0] == x[-1]:
        raise StatsError("shapiro_wilk is undefined when all observations are equal")

    m = np.array([norm_ppf((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)])
    ssq_m = float(m @ m)
    a = np.zeros(n)
    if n == 3:
        a[0] = -math.sqrt(0.5)
        a[2] = math.sqrt(0.5)
    else:
        u = 1.0 / math.sqrt(n)
        a[n - 1] = _poly5(_C1, u, m[n - 1] / math.sqrt(ssq_m))
        if n > 5:
            a[n - 2] = _poly5(_C2, u, m[n - 2] / math.sqrt(ssq_m))
            phi = (ssq_m - 2.0 * m[n - 1] ** 2 - 2.0 * m[n - 2] ** 2) \
                / (1.0 - 2.0 * a[n - 1] ** 2 - 2.0 * a[n - 2] ** 2)
            lo = 2
        else:
            phi = (ssq_m - 2.0 * m[n - 1] ** 2) / (1.0 - 2.0 * a[n - 1] ** 2)
            lo = 1
        a[lo:n - lo] = m[lo:n - lo] / math.sqrt(phi)
        a[0] = -a[n - 1]
        if n > 5:
            a[1] = -a[n - 2]

    xc = x - x.mean()
    w = float(a @ x) ** 2 / float(xc @ xc)
    w = min(w, 1.0)

    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return w, min(max(p, 0.0), 1.0)
    if 1.0 - w < 1e-12:
        return w, 1.0
    if n <= 11:
        gamma = -2.273 + 0.459 * n
        if gamma - math.log(1.0 - w) <= 0.0:
            return w, 0.0
        stat = -math.log(gamma - math.log(1.0 - w))
        mu = 0.5440 - 0.39978 * n + 0.025054 * n * n - 0.0006714 * n ** 3
        sigma = math.exp(1.3822 - 0.77857 * n + 0.062767 * n * n - 0.0020322 * n ** 3)
    else:
        ln_n = math.log(n)
        stat = math.log(1.0 - w)
        mu = -1.5861 - 0.31082 * ln_n - 0.083751 * ln_n * ln_n + 0.0038915 * ln_n ** 3
        sigma = math.exp(-0.4803 - 0.082676 * ln_n + 0.0030302 * ln_n * ln_n)
    return w, norm_sf((stat - mu) / sigma)


# ---------------------------------------------------------------------------
# model-level analyses


@dataclass
class CorrelationMatrix:
    labels: list[str]
    values: np.ndarray
    flagged: list[str]


GRAPH_CHOICES = ("global", "fag", "fcg", "cag")


def node_value_matrix(model, ds, batch_size: int, dtype, pad_value: float,
                      which: str = "global",
                      source: str = "heads") -> tuple[list[str], np.ndarray]:
    """Per-clip scalar value for every node of one graph.

    source "heads" reads each node through its level-matched readout
    head (raw scores); source "pca" takes the first principal component
    of the node's 64-d state over the dataset, sign fixed so the largest
    loading is positive.
    """
    from .training import make_batch

    if which not in GRAPH_CHOICES:
        raise StatsError(f"graph must be one of {GRAPH_CHOICES}, got {which!r}")
    if source not in ("heads", "pca"):
        raise StatsError(f"source must be heads or pca, got {source!r}")
    tax = ds.taxonomy
    nf, nc = tax.n_fae, tax.n_cae
    fae, cae, ar = list(tax.fae_names), list(tax.cae_names), ["annoyance"]
    labels = {"global": fae + cae + ar, "fag": fae + ar,
              "fcg": fae + cae, "cag": cae + ar}[which]

    scores: list[np.ndarray] = []
    states: list[np.ndarray] = []
    model.eval()
    with T.no_grad():
        for start in range(0, len(ds), batch_size):
            idx = range(start, min(start + batch_size, len(ds)))
            x, _, _, _ = make_batch(ds, idx, dtype, pad_value)
            out = model(Tensor(x))
            if source == "pca":
                key = {"global": "h_global", "fag": "h_fag",
                       "fcg": "h_fcg", "cag": "h_cag"}[which]
                states.append(out[key].data.astype(np.float64))
                continue
            if which == "global":
                block = np.concatenate([out["l3_fae_logit"].data,
                                        out["l3_cae_logit"].data,
                                        out["l3_ar"].data[:, None]], axis=1)
            elif which == "fag":
                h = out["h_fag"]
                block = np.concatenate([
                    model.head2_fae(T.narrow(h, 1, 0, nf)).data,
                    model.head2_ar(T.narrow(h, 1, nf, 1)).data], axis=1)
            elif which == "fcg":
                h = out["h_fcg"]
                block = np.concatenate([
                    model.head2_fae(T.narrow(h, 1, 0, nf)).data,
                    model.head2_cae(T.narrow(h, 1, nf, nc)).data], axis=1)
            else:
                h = out["h_cag"]
                block = np.concatenate([
                    model.head2_cae(T.narrow(h, 1, 0, nc)).data,
                    model.head2_ar(T.narrow(h, 1, nc, 1)).data], axis=1)
            scores.append(block.astype(np.float64))

    if source == "heads":
        return labels, np.concatenate(scores, axis=0)
    stacked = np.concatenate(states, axis=0)
    m, n_nodes, _ = stacked.shape
    values = np.empty((m, n_nodes))
    for k in range(n_nodes):
        centered = stacked[:, k, :] - stacked[:, k, :].mean(axis=0)
        u, s, vt = np.linalg.svd(centered, full_matrices=False)
        lead = vt[0]
        if lead[np.argmax(np.abs(lead))] < 0:
            lead, u = -lead, -u
        values[:, k] = u[:, 0] * s[0]
    return labels, values


def correlation_matrix(labels: list[str], values: np.ndarray) -> CorrelationMatrix:
    """Pairwise Pearson over columns; constant columns are flagged and
    their rows left as nan rather than failing the whole analysis."""
    m, n = values.shape
    if m < 2:
        raise StatsError(f"correlation needs at least 2 clips, got {m}")
    centered = values - values.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    ok = norms > 0
    flagged = [labels[i] for i in range(n) if not ok[i]]
    out = np.full((n, n), np.nan)
    if ok.any():
        sub = centered[:, ok] / norms[ok]
        block = np.clip(sub.T @ sub, -1.0, 1.0)
        np.fill_diagonal(block, 1.0)
        idx = np.nonzero(ok)[0]
        out[np.ix_(idx, idx)] = block
    return CorrelationMatrix(labels, out, flagged)


@dataclass
class EventArRow:
    event: str
    rho: float
    pvalue: float
    n_pos: int
    marker: str
    note: str = ""


def event_ar_analysis(y_fae: np.ndarray, ar: np.ndarray, names,
                      method: str = "t") -> list[EventArRow]:
    """Rank correlation between each event's presence labels and the
    rating, two-star marking at p < 0.001, one star at p < 0.01.
    Rows sort by correlation, strongest positive first."""
    y_fae = np.asarray(y_fae)
    ar = np.asarray(ar, dtype=np.float64)
    rows: list[EventArRow] = []
    for k, name in enumerate(names):
        col = y_fae[:, k].astype(np.float64)
        n_pos = int((col == 1).sum())
        try:
            res = spearman(col, ar, method=method)
        except StatsError as e:
            rows.append(EventArRow(name, float("nan"), float("nan"), n_pos, "", str(e)))
            continue
        marker = "**" if res.pvalue < 0.001 else ("*" if res.pvalue < 0.01 else "")
        rows.append(EventArRow(name, res.rho, res.pvalue, n_pos, marker))
    rows.sort(key=lambda r: (math.isnan(r.rho), -(r.rho if not math.isnan(r.rho) else 0.0)))
    return rows
