"""Calibration of the power-law and logarithmic impact models.

Both models regress the normalized return on

    1, omega^alpha, S, h(V^A_1..L), h(V^B_1..L), G^A_1..L, G^B_1..L, D_1..23

with h(V) = V^beta (power law) or ln V (logarithmic).  For fixed exponents
the model is linear, so the exponents are scanned on a grid and each grid
point is fitted by ordinary least squares; the point with the largest
adjusted R^2 wins.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy import stats
from threadpoolctl import threadpool_limits

from .features import N_BUCKETS, ObservationSet
from .trades import TRADE_TYPES

POWER_LAW = "power_law"
LOGARITHMIC = "logarithmic"

RCOND_MIN = 1e-12
TIE_TOL = 1e-12


def default_grid(step: float = 0.05) -> tuple[float, ...]:
    """Exponents step, 2*step, ... strictly inside (0, 1)."""
    m = int(round(1.0 / step))
    return tuple(round(i * step, 10) for i in range(1, m) if i * step < 1 - 1e-12)


class RankDeficientError(np.linalg.LinAlgError):
    """The design matrix is singular to working precision."""

    def __init__(self, columns: Sequence[str], rcond: float):
        self.columns = list(columns)
        self.rcond = rcond
        super().__init__(
            f"design is rank deficient (rcond={rcond:.3g}); dependent columns: {', '.join(self.columns)}"
        )


class CalibrationFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str = POWER_LAW
    levels: int = 5
    alphas: tuple[float, ...] = field(default_factory=default_grid)
    betas: tuple[float, ...] = field(default_factory=default_grid)
    include_dummies: bool = True
    weighted: bool = False

    def __post_init__(self):
        if self.kind not in (POWER_LAW, LOGARITHMIC):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        for g in (self.alphas, self.betas):
            if not g or any(not 0 < x < 1 for x in g):
                raise ValueError("grid values must lie in (0, 1)")

    @property
    def beta_grid(self) -> tuple[Optional[float], ...]:
        return self.betas if self.kind == POWER_LAW else (None,)

    @property
    def n_grid(self) -> int:
        return len(self.alphas) * len(self.beta_grid)


def coefficient_names(levels: int, dummies: Iterable[int] = range(1, N_BUCKETS)) -> list[str]:
    names = ["a0", "a", "b"]
    for p in "cdef":
        names += [f"{p}{i}" for i in range(1, levels + 1)]
    return names + [f"g{i}" for i in dummies]


def _dummy_columns(obs: ObservationSet, include: bool) -> list[int]:
    """Bucket dummies to use: 1..23, minus any that never occur."""
    if not include:
        return []
    present = obs.buckets[:, 1:].any(axis=0)
    return [i + 1 for i in range(N_BUCKETS - 1) if present[i]]


def _volume_block(obs: ObservationSet, kind: str, beta: Optional[float]) -> np.ndarray:
    v = np.hstack([obs.va, obs.vb])
    if kind == POWER_LAW:
        return v ** beta
    if np.any(v <= 0):
        raise ValueError("nonpositive depth under the logarithm")
    return np.log(v)


def build_design(
    obs: ObservationSet, spec: ModelSpec, alpha: float, beta: Optional[float] = None
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Design matrix, response and column names for one grid point.

    Column order: 1, omega^alpha, S, VA (L), VB (L), GA (L), GB (L), dummies.
    Dummies for buckets that never occur are left out.
    """
    if len(obs) == 0:
        raise ValueError("no observations")
    if obs.levels < spec.levels:
        raise ValueError(f"observations carry {obs.levels} levels, spec needs {spec.levels}")
    L = spec.levels
    sub = obs.first_levels(L)
    if spec.kind == POWER_LAW and beta is None:
        raise ValueError("power-law design needs beta")
    dummies = _dummy_columns(sub, spec.include_dummies)
    X = np.column_stack(
        [
            np.ones(len(sub)),
            sub.omega ** alpha,
            sub.spread,
            _volume_block(sub, spec.kind, beta),
            sub.ga,
            sub.gb,
            sub.buckets[:, dummies],
        ]
    )
    return X, sub.r.copy(), coefficient_names(L, dummies)


@dataclass
class OLSFit:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    r2: float
    r2_adj: float
    f_stat: float
    f_pvalue: float
    residuals: np.ndarray
    rss: float
    n_obs: int
    n_params: int
    rcond: float

    @property
    def dof(self) -> int:
        return self.n_obs - self.n_params

    def conf_int(self, level: float = 0.95) -> np.ndarray:
        q = stats.t.ppf(0.5 + level / 2, self.dof)
        return np.column_stack([self.coef - q * self.se, self.coef + q * self.se])


def _scaled_rcond(R: np.ndarray) -> tuple[float, np.ndarray]:
    s = np.linalg.svd(R, compute_uv=False)
    if s[0] == 0:
        return 0.0, s
    return float(s[-1] / s[0]), s


def ols_fit(
    X: np.ndarray,
    y: np.ndarray,
    names: Optional[Sequence[str]] = None,
    weights: Optional[np.ndarray] = None,
    has_const: bool = True,
) -> OLSFit:
    """Least squares through a column-pivoted QR of the column-scaled design.

    Standard errors are homoskedastic, sigma^2 (X'X)^-1 with
    sigma^2 = RSS / (n - k); p-values use Student t with n - k degrees of
    freedom.  The F statistic tests all non-constant coefficients at once.
    With ``weights`` every row's squared residual is multiplied by its weight.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if n <= k:
        raise ValueError(f"need more observations than parameters ({n} <= {k})")
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        sw = np.sqrt(w)
        Xw, yw = X * sw[:, None], y * sw
    else:
        w = np.ones(n)
        Xw, yw = X, y

    norms = np.linalg.norm(Xw, axis=0)
    if np.any(norms == 0):
        raise RankDeficientError([names[j] for j in np.flatnonzero(norms == 0)], 0.0)
    Q, R, piv = scipy.linalg.qr(Xw / norms, mode="economic", pivoting=True)
    rcond, s = _scaled_rcond(R)
    if rcond < RCOND_MIN:
        n_dep = max(1, int(np.sum(s < RCOND_MIN * s[0])))
        raise RankDeficientError([names[j] for j in piv[k - n_dep:]], rcond)

    coef_p = scipy.linalg.solve_triangular(R, Q.T @ yw)
    coef = np.empty(k)
    coef[piv] = coef_p / norms[piv]
    resid_w = yw - Xw @ coef
    rss = float(resid_w @ resid_w)
    dof = n - k
    sigma2 = rss / dof
    Rinv = scipy.linalg.solve_triangular(R, np.eye(k))
    cov_p = (Rinv @ Rinv.T) * sigma2 / np.outer(norms[piv], norms[piv])
    var = np.empty(k)
    var[piv] = np.diag(cov_p)
    se = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
        p = 2 * stats.t.sf(np.abs(t), dof)

    if has_const:
        ybar = np.sum(w * y) / np.sum(w)
        tss = float(np.sum(w * (y - ybar) ** 2))
        k_slopes = k - 1
    else:
        tss = float(np.sum(w * y * y))
        k_slopes = k
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = 1 - rss / tss if tss > 0 else float("nan")
        r2_adj = 1 - (1 - r2) * (n - 1 if has_const else n) / dof
        f_stat = ((tss - rss) / k_slopes) / sigma2 if k_slopes else float("nan")
    f_pvalue = float(stats.f.sf(f_stat, k_slopes, dof)) if k_slopes else float("nan")
    return OLSFit(
        names=names, coef=coef, se=se, t=t, p=p, r2=float(r2), r2_adj=float(r2_adj),
        f_stat=float(f_stat), f_pvalue=f_pvalue, residuals=y - X @ coef, rss=rss,
        n_obs=n, n_params=k, rcond=rcond,
    )


def aggregate_by_size(obs: ObservationSet) -> ObservationSet:
    """Average every variable over trades of identical size.

    Groups keep the order in which their size first appears.  Bucket dummies
    become within-group frequencies and ``weight`` holds the group's trade
    count.
    """
    if len(obs) == 0:
        return obs
    if len(set(obs.instrument)) > 1:
        raise ValueError("aggregate one instrument at a time")
    _, first, inverse = np.unique(obs.omega, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    g = rank[inverse]
    n_groups = len(first)
    w = obs.weight
    counts = np.bincount(g, weights=w, minlength=n_groups)

    def mean(col):
        col = np.asarray(col, dtype=float)
        if col.ndim == 1:
            return np.bincount(g, weights=col * w, minlength=n_groups) / counts
        return np.column_stack(
            [np.bincount(g, weights=col[:, j] * w, minlength=n_groups) / counts for j in range(col.shape[1])]
        ).reshape(n_groups, col.shape[1])

    return ObservationSet(
        r=mean(obs.r),
        omega=obs.omega[first[order]],
        spread=mean(obs.spread),
        va=mean(obs.va),
        vb=mean(obs.vb),
        ga=mean(obs.ga),
        gb=mean(obs.gb),
        buckets=mean(obs.buckets),
        instrument=obs.instrument[first[order]],
        weight=counts,
        kind=obs.kind,
        normalized=obs.normalized,
    )


@dataclass
class CalibrationResult:
    kind: str
    levels: int
    alpha: float
    beta: Optional[float]
    names: list[str]
    coef: list[float]
    se: list[float]
    t: list[float]
    p: list[float]
    r2: float
    r2_adj: float
    f_pvalue: float
    n_obs: int
    n_params: int
    alphas: list[float]
    betas: list[Optional[float]]
    grid_trace: list[list[Optional[float]]]
    trade_type: Optional[str] = None
    instrument: Optional[str] = None
    weighted: bool = False
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.coef[self.names.index(name)]

    def row(self, name: str) -> dict:
        j = self.names.index(name)
        return {"coef": self.coef[j], "se": self.se[j], "t": self.t[j], "p": self.p[j]}

    def get(self, name: str, default=None):
        return self[name] if name in self.names else default

    def trace_array(self) -> np.ndarray:
        return np.array([[np.nan if v is None else v for v in row] for row in self.grid_trace])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coefficients"] = [
            {"name": n, "coef": _num(c), "se": _num(s), "t": _num(t), "p": _num(p)}
            for n, c, s, t, p in zip(self.names, self.coef, self.se, self.t, self.p)
        ]
        for k in ("names", "coef", "se", "t", "p"):
            del d[k]
        for k in ("r2", "r2_adj", "f_pvalue"):
            d[k] = _num(d[k])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        d = dict(d)
        rows = d.pop("coefficients")
        d["names"] = [r["name"] for r in rows]
        for k in ("coef", "se", "t", "p"):
            d[k] = [_unnum(r[k]) for r in rows]
        for k in ("r2", "r2_adj", "f_pvalue"):
            d[k] = _unnum(d[k])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "CalibrationResult":
        return cls.from_dict(json.loads(text))


def _num(x):
    """JSON has no inf/nan; encode them as strings."""
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _unnum(x):
    return float(x) if isinstance(x, str) else x


CALIBRATION_SCHEMA = {
    "type": "object",
    "required": [
        "kind", "levels", "alpha", "beta", "coefficients", "r2", "r2_adj", "f_pvalue",
        "n_obs", "n_params", "alphas", "betas", "grid_trace",
    ],
    "properties": {
        "kind": {"enum": [POWER_LAW, LOGARITHMIC]},
        "levels": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "beta": {"type": ["number", "null"]},
        "n_obs": {"type": "integer"},
        "n_params": {"type": "integer"},
        "coefficients": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "coef", "se", "t", "p"],
                "properties": {"name": {"type": "string"}},
            },
        },
        "grid_trace": {"type": "array", "items": {"type": "array"}},
    },
}


class _GridScan:
    """Adjusted R^2 over the exponent grid without refitting the whole design.

    Columns that do not depend on the exponents are orthogonalized once; for
    each beta the volume block is projected off them, and for each alpha only
    the single size column is left to project.  The residual sum of squares
    equals that of a full refit (Frisch-Waugh-Lovell), and the rank check
    uses the assembled triangular factor of the column-scaled design.
    """

    def __init__(self, obs: ObservationSet, spec: ModelSpec):
        L = spec.levels
        sub = obs.first_levels(L)
        self.spec = spec
        n = len(sub)
        dummies = _dummy_columns(sub, spec.include_dummies)
        fixed = [np.ones(n)[:, None], sub.spread[:, None]]
        if spec.kind == LOGARITHMIC:
            fixed.append(_volume_block(sub, LOGARITHMIC, None))
        fixed += [sub.ga, sub.gb, sub.buckets[:, dummies]]
        F = np.hstack(fixed)
        w = sub.weight if spec.weighted else np.ones(n)
        self.sw = np.sqrt(w)
        self.n = n
        self.k = 2 + 4 * L + len(dummies) + 1
        if n <= self.k:
            raise ValueError(f"need more observations than parameters ({n} <= {self.k})")

        Fw = F * self.sw[:, None]
        fn = np.linalg.norm(Fw, axis=0)
        fn[fn == 0] = 1.0  # a zero column leaves a zero on R's diagonal; the rank check catches it
        self.Qf, self.Rf = np.linalg.qr(Fw / fn)
        y = sub.r * self.sw
        self.yr = y - self.Qf @ (self.Qf.T @ y)
        ybar = np.sum(w * sub.r) / np.sum(w)
        self.tss = float(np.sum(w * (sub.r - ybar) ** 2))
        self.omega = sub.omega
        self.vsrc = np.hstack([sub.va, sub.vb])
        self._alpha_cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def _project(self, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nrm = np.linalg.norm(cols, axis=0)
        nrm[nrm == 0] = 1.0
        cols = cols / nrm
        C = self.Qf.T @ cols
        return C, cols - self.Qf @ C

    def alpha_part(self, alpha: float):
        if alpha not in self._alpha_cache:
            col = (self.omega ** alpha * self.sw)[:, None]
            self._alpha_cache[alpha] = self._project(col)
        return self._alpha_cache[alpha]

    def scan_beta(self, beta: Optional[float], alphas: Sequence[float]) -> list[float]:
        kf = self.Rf.shape[1]
        if beta is None:
            m = 0
            Cv = np.zeros((kf, 0))
            Qv = np.zeros((self.n, 0))
            Rv = np.zeros((0, 0))
        else:
            Cv, Vr = self._project(self.vsrc ** beta * self.sw[:, None])
            Qv, Rv = np.linalg.qr(Vr)
            m = Vr.shape[1]
        y2 = self.yr - Qv @ (Qv.T @ self.yr)
        k = kf + m + 1
        R = np.zeros((k, k))
        R[:kf, :kf] = self.Rf
        R[:kf, kf:kf + m] = Cv
        R[kf:kf + m, kf:kf + m] = Rv
        out = []
        for alpha in alphas:
            cw, wr = self.alpha_part(alpha)
            cvw = Qv.T @ wr
            w2 = (wr - Qv @ cvw)[:, 0]
            rho = float(np.linalg.norm(w2))
            R[:kf, -1] = cw[:, 0]
            R[kf:kf + m, -1] = cvw[:, 0]
            R[-1, -1] = rho
            rcond, _ = _scaled_rcond(R)
            if rcond < RCOND_MIN:
                out.append(float("nan"))
                continue
            e = y2 - w2 * (w2 @ y2) / (rho * rho)
            rss = float(e @ e)
            r2 = 1 - rss / self.tss
            out.append(1 - (1 - r2) * (self.n - 1) / (self.n - self.k))
        return out


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("IMPACTLAB_THREADS", "1")))
    except ValueError:
        return 1


def select_grid_point(trace: np.ndarray) -> tuple[int, int]:
    """Index of the largest finite trace value.

    Values within TIE_TOL of the maximum count as ties and go to the
    smallest alpha, then the smallest beta.
    """
    if not np.any(np.isfinite(trace)):
        raise CalibrationFailed("every grid point is rank deficient")
    best = np.nanmax(trace)
    ia, ib = np.nonzero(trace >= best - TIE_TOL)
    j = np.lexsort((ib, ia))[0]
    return int(ia[j]), int(ib[j])


def grid_calibrate(
    obs: ObservationSet,
    spec: ModelSpec,
    workers: Optional[int] = None,
    trade_type: Optional[str] = None,
    instrument: Optional[str] = None,
) -> CalibrationResult:
    """Scan the exponent grid, keep the point with the best adjusted R^2 and
    refit it in full to get coefficients, standard errors and p-values.

    Grid points are independent; with ``workers > 1`` the beta rows are
    spread over threads.  BLAS is held to one thread during the scan so the
    result does not depend on scheduling.
    """
    workers = workers or _default_workers()
    scan = _GridScan(obs, spec)
    alphas = list(spec.alphas)
    betas = list(spec.beta_grid)
    with threadpool_limits(limits=1):
        for a in alphas:
            scan.alpha_part(a)
        if workers > 1 and len(betas) > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                cols = list(ex.map(lambda b: scan.scan_beta(b, alphas), betas))
        else:
            cols = [scan.scan_beta(b, alphas) for b in betas]
        trace = np.array(cols, dtype=float).T  # (alpha, beta)
        if not np.any(np.isfinite(trace)):
            # refit one point so the error names the dependent columns
            X, y, names = build_design(obs, spec, alphas[0], betas[0])
            ols_fit(X, y, names)
        ia, ib = select_grid_point(trace)
        alpha, beta = alphas[ia], betas[ib]
        X, y, names = build_design(obs, spec, alpha, beta)
        fit = ols_fit(X, y, names, weights=obs.weight if spec.weighted else None)

    if trade_type is None and obs.kind is not None:
        trade_type = obs.kind.value
    if instrument is None and len(obs) and len(set(obs.instrument)) == 1:
        instrument = str(obs.instrument[0])
    return CalibrationResult(
        kind=spec.kind,
        levels=spec.levels,
        alpha=alpha,
        beta=beta,
        names=names,
        coef=[float(x) for x in fit.coef],
        se=[float(x) for x in fit.se],
        t=[float(x) for x in fit.t],
        p=[float(x) for x in fit.p],
        r2=fit.r2,
        r2_adj=fit.r2_adj,
        f_pvalue=fit.f_pvalue,
        n_obs=fit.n_obs,
        n_params=fit.n_params,
        alphas=alphas,
        betas=betas,
        grid_trace=[[None if not math.isfinite(v) else float(v) for v in row] for row in trace],
        trade_type=trade_type,
        instrument=instrument,
        weighted=spec.weighted,
    )


@dataclass
class SignificanceMatrix:
    keys: list[str]
    names: list[str]
    sign: np.ndarray
    significant: np.ndarray
    estimate: np.ndarray
    pvalue: np.ndarray
    level: float

    def symbol(self, i: int, j: int) -> str:
        s = {1: "+", -1: "-", 0: "0"}[int(self.sign[i, j])]
        return s + "*" if self.significant[i, j] else s

    def to_csv(self, path, comment: Optional[str] = None) -> None:
        with open(path, "w") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            fh.write("key,coefficient,estimate,p_value,sign,significant\n")
            for i, key in enumerate(self.keys):
                for j, name in enumerate(self.names):
                    if np.isnan(self.estimate[i, j]):
                        continue
                    fh.write(
                        f"{key},{name},{float(self.estimate[i, j])!r},{float(self.pvalue[i, j])!r},"
                        f"{int(self.sign[i, j])},{int(self.significant[i, j])}\n"
                    )


def significance_pattern(
    results: Mapping[str, CalibrationResult], level: float = 0.05, dummies: bool = False
) -> SignificanceMatrix:
    """Sign and significance (p < level) of every coefficient of every fit."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    keys = list(results)
    specs = {(r.kind, r.levels) for r in results.values()}
    if len(specs) > 1:
        raise ValueError(f"results come from different model specs: {sorted(specs)}")
    names: list[str] = []
    for r in results.values():
        for n in r.names:
            if n not in names and (dummies or not n.startswith("g")):
                names.append(n)
    est = np.full((len(keys), len(names)), np.nan)
    pv = np.full_like(est, np.nan)
    for i, k in enumerate(keys):
        r = results[k]
        for j, n in enumerate(names):
            if n in r.names:
                est[i, j] = r[n]
                pv[i, j] = r.p[r.names.index(n)]
    sign = np.where(np.isnan(est), 0, np.sign(np.nan_to_num(est))).astype(int)
    sig = np.nan_to_num(pv, nan=1.0) < level
    return SignificanceMatrix(keys, names, sign, sig, est, pv, level)


ASYMMETRY_COEFS = ("a", "b", "c1", "d1", "e1", "f1")


def asymmetry_compare(results: Mapping[str, Mapping]) -> list[dict]:
    """|coefficient| per stock and trade type for the buy/sell comparison.

    ``results`` maps stock -> {trade type -> CalibrationResult}.  Missing
    types give None and set ``absent``.
    """
    rows = []
    for stock, by_type in results.items():
        by_type = {getattr(t, "value", t): r for t, r in by_type.items()}
        for name in ASYMMETRY_COEFS:
            row = {"stock": stock, "coefficient": name, "absent": False}
            for t in TRADE_TYPES:
                r = by_type.get(t.value)
                if r is None or name not in r.names:
                    row[t.value] = None
                    row["absent"] = True
                else:
                    row[t.value] = abs(r[name])
            rows.append(row)
    return rows


@dataclass
class Linkage:
    slope: float
    intercept: float
    x: np.ndarray
    y: np.ndarray
    labels: list[str]


def taylor_linkage(
    pl: CalibrationResult | Sequence[CalibrationResult],
    ln: CalibrationResult | Sequence[CalibrationResult],
) -> Linkage:
    """Check c_ln ~ beta * c_pl and d_ln ~ beta * d_pl by a straight-line fit.

    For small beta, V^beta ~ 1 + beta ln V, so the logarithmic model's depth
    coefficients should equal the power-law ones times beta.  Pairs of
    results may be passed as sequences (one pair per trade type, say).
    """
    pls = [pl] if isinstance(pl, CalibrationResult) else list(pl)
    lns = [ln] if isinstance(ln, CalibrationResult) else list(ln)
    if len(pls) != len(lns):
        raise ValueError("need one logarithmic fit per power-law fit")
    xs, ys, labels = [], [], []
    for p, l in zip(pls, lns):
        if p.kind != POWER_LAW or l.kind != LOGARITHMIC:
            raise ValueError("taylor_linkage(power-law fit, logarithmic fit)")
        if p.levels != l.levels or p.n_obs != l.n_obs:
            raise ValueError("fits must share observations and L")
        tag = p.trade_type or ""
        for prefix in "cd":
            for i in range(1, p.levels + 1):
                name = f"{prefix}{i}"
                xs.append(p.beta * p[name])
                ys.append(l[name])
                labels.append(f"{tag}:{name}" if tag else name)
    x = np.array(xs)
    y = np.array(ys)
    A = np.column_stack([np.ones_like(x), x])
    (intercept, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    return Linkage(float(slope), float(intercept), x, y, labels)
