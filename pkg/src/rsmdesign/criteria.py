"""Single and compound design criteria, larger-is-better throughout.

Kappa index -> component of the compound criterion:

    0  D_S      |X0'QX0|^(1/(p-1))
    1  (DP)_S   D_S / F(p-1, d; 1-alpha1)
    2  (AP)_S   1 / (tr{W (X'X)^-1} F(1, d; 1-alpha2))
    3  A_S      1 / tr{W (X'X)^-1}
    4  df       n - d (number of distinct treatments)
    5  I        1 / tr{M (X'X)^-1}
    6  (IP)     1 / (tr{M (X'X)^-1} F(1, d; 1-alpha3))
    7  I_D      1 / tr{M0 (X'X)^-1}
    8  (I_DP)   1 / (tr{M0 (X'X)^-1} F(1, d; 1-alpha4))

The compound value is the product of these components raised to their
kappas (kappas sum to one).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import Design, ModelSpec, df_accounting, model_matrix
from .numerics import SingularMatrixError, cho_solve, cholesky, f_quantile, logdet_psd
from .region import Region, difference_moment_matrix, moment_matrix

CRITERIA = ("DS", "DPS", "AS", "APS", "I", "IP", "ID", "IDP")
CRITERION_LABELS = {
    "DS": "D_S",
    "DPS": "(DP)_S",
    "AS": "A_S",
    "APS": "(AP)_S",
    "I": "I",
    "IP": "(IP)",
    "ID": "I_D",
    "IDP": "(I_DP)",
}
# kappa index of each single criterion
KAPPA_INDEX = {"DS": 0, "DPS": 1, "APS": 2, "AS": 3, "DF": 4, "I": 5, "IP": 6, "ID": 7, "IDP": 8}
DEFAULT_ALPHA = 0.05
IMPROVE_TOL = 1e-12


def default_weights(model: ModelSpec, linear: float = 1.0, quadratic: float = 0.25, interaction: float = 1.0) -> np.ndarray:
    """Diagonal of W: intercept 0, and per-term-type weights."""
    w = {"intercept": 0.0, "linear": linear, "quadratic": quadratic, "interaction": interaction}
    return np.array([w[t.kind] for t in model.terms])


@dataclass(frozen=True)
class CriterionConfig:
    """Compound-criterion weights.

    ``weights`` is the diagonal of W; None means :func:`default_weights`.
    """

    kappas: tuple[float, ...] = (1.0, 0, 0, 0, 0, 0, 0, 0, 0)
    alphas: tuple[float, float, float, float] = (DEFAULT_ALPHA,) * 4
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        k = tuple(float(v) for v in self.kappas)
        if len(k) != 9:
            raise ValueError("exactly nine kappas (kappa0..kappa8) are required")
        if any(v < 0 for v in k):
            raise ValueError("kappas must be nonnegative")
        if abs(sum(k) - 1.0) > 1e-9:
            raise ValueError(f"kappas must sum to 1, got {sum(k):.12g}")
        a = tuple(float(v) for v in self.alphas)
        if len(a) != 4 or not all(0 < v < 1 for v in a):
            raise ValueError("four alphas in (0, 1) are required")
        object.__setattr__(self, "kappas", k)
        object.__setattr__(self, "alphas", a)
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if any(v < 0 for v in w):
                raise ValueError("W weights must be nonnegative")
            object.__setattr__(self, "weights", w)

    @classmethod
    def single(cls, name: str, alpha: float = DEFAULT_ALPHA, weights=None) -> "CriterionConfig":
        k = [0.0] * 9
        k[KAPPA_INDEX[name.upper()]] = 1.0
        return cls(tuple(k), (alpha,) * 4, None if weights is None else tuple(weights))

    @classmethod
    def from_mapping(cls, kappas: Mapping[str, float], alphas=None, weights=None) -> "CriterionConfig":
        """Build from e.g. ``{"k1": 0.5, "k7": 0.5}`` or ``{"DPS": 0.5, "ID": 0.5}``."""
        k = [0.0] * 9
        for key, v in kappas.items():
            key = str(key).upper()
            if key.startswith("K") and key[1:].isdigit():
                idx = int(key[1:])
            elif key in KAPPA_INDEX:
                idx = KAPPA_INDEX[key]
            else:
                raise ValueError(f"unknown kappa key {key!r}")
            if not 0 <= idx <= 8:
                raise ValueError(f"kappa index {idx} out of range")
            k[idx] += float(v)
        if alphas is None:
            alphas = (DEFAULT_ALPHA,) * 4
        elif isinstance(alphas, (int, float)):
            alphas = (float(alphas),) * 4
        return cls(tuple(k), tuple(alphas), None if weights is None else tuple(weights))

    def weight_vector(self, model: ModelSpec) -> np.ndarray:
        if self.weights is None:
            return default_weights(model)
        if len(self.weights) != model.p:
            raise ValueError(f"{len(self.weights)} W weights given for a model with p={model.p}")
        return np.array(self.weights)

    @property
    def uses_pure_error(self) -> bool:
        k = self.kappas
        return any(k[i] > 0 for i in (1, 2, 6, 8))


@dataclass
class CriterionValue:
    value: float
    defined: bool
    log_value: float
    components: dict[str, float] = field(default_factory=dict)

    def report(self) -> str:
        lines = [f"value={self.value:.10g}", f"defined={str(self.defined).lower()}"]
        lines += [f"{k}={v:.10g}" for k, v in self.components.items()]
        return "\n".join(lines)


class LogQuantiles:
    """log F quantiles per pure-error df, indexed 0..n (inf at d=0)."""

    def __init__(self, p: int, n: int, alphas: Sequence[float]):
        d = np.arange(n + 1)
        self.ds = self._table(p - 1, d, alphas[0])
        self.ap = self._table(1, d, alphas[1])
        self.ip = self._table(1, d, alphas[2])
        self.idp = self._table(1, d, alphas[3])

    @staticmethod
    def _table(df1, ds, alpha):
        return np.array([math.log(f_quantile(df1, int(d), 1 - alpha)) for d in ds])


def compound_log(kappas, p, n, d, logdet_info, tr_w, tr_m, tr_m0, logq: LogQuantiles):
    """Vectorised log of the compound criterion.

    ``logdet_info`` is log|X'X|; |X0'QX0| = |X'X| / n.  Arguments may be
    arrays.  Factors with zero exponent are skipped, so an inactive
    F-quantile never turns the value into zero.  Returns -inf where an
    active pure-error factor meets d = 0.
    """
    k = kappas
    d = np.asarray(d)
    out = np.zeros(np.broadcast(d, logdet_info, tr_w, tr_m, tr_m0).shape)
    if k[0] + k[1] > 0:
        out = out + (k[0] + k[1]) / (p - 1) * (np.asarray(logdet_info) - math.log(n))
    if k[1] > 0:
        out = out - k[1] * logq.ds[d]
    if k[2] > 0:
        out = out - k[2] * logq.ap[d]
    if k[2] + k[3] > 0:
        out = out - (k[2] + k[3]) * np.log(tr_w)
    if k[4] > 0:
        out = out + k[4] * np.log(n - d)
    if k[5] + k[6] > 0:
        out = out - (k[5] + k[6]) * np.log(tr_m)
    if k[6] > 0:
        out = out - k[6] * logq.ip[d]
    if k[7] + k[8] > 0:
        out = out - (k[7] + k[8]) * np.log(tr_m0)
    if k[8] > 0:
        out = out - k[8] * logq.idp[d]
    return out


@dataclass
class DesignSummary:
    """Information-matrix quantities shared by every criterion."""

    n: int
    p: int
    d: int
    lof: int
    logdet: float  # log|X'X|, -inf if singular
    tr_w: float
    tr_m: float
    tr_m0: float
    inv_corner: float  # (X'X)^-1 [0, 0]

    @property
    def singular(self) -> bool:
        return not math.isfinite(self.logdet)


def summarize(design: Design, model: ModelSpec, region: Region | None, weights=None) -> DesignSummary:
    x = model_matrix(model, design)
    a = x.T @ x
    d, lof = df_accounting(design, model)
    nan = math.nan
    try:
        low = cholesky(a)
    except SingularMatrixError:
        return DesignSummary(design.n, model.p, d, lof, -math.inf, nan, nan, nan, nan)
    logdet = float(2.0 * np.sum(np.log(np.diag(low))))
    ainv = cho_solve(low, np.eye(model.p))
    w = default_weights(model) if weights is None else np.asarray(weights, dtype=float)
    tr_w = float(np.dot(w, np.diag(ainv)))
    if region is not None:
        tr_m = float(np.sum(moment_matrix(region, model) * ainv))
        tr_m0 = float(np.sum(difference_moment_matrix(region, model) * ainv))
    else:
        tr_m = tr_m0 = nan
    return DesignSummary(design.n, model.p, d, lof, logdet, tr_w, tr_m, tr_m0, float(ainv[0, 0]))


def ds_value(design: Design, model: ModelSpec) -> float:
    """|X0'QX0|^(1/(p-1)); 0 when singular."""
    x0 = model_matrix(model, design)[:, 1:]
    c = x0 - x0.mean(axis=0)  # Q X0
    ld = logdet_psd(c.T @ c)
    return 0.0 if not math.isfinite(ld) else math.exp(ld / (model.p - 1))


def _interval_factor(df1: int, d: int, alpha: float) -> float:
    return f_quantile(df1, d, 1 - alpha)


def dps_value(design: Design, model: ModelSpec, alpha: float = DEFAULT_ALPHA) -> float:
    d, _ = df_accounting(design, model)
    if d == 0:
        return 0.0
    return ds_value(design, model) / _interval_factor(model.p - 1, d, alpha)


def as_value(design: Design, model: ModelSpec, weights=None) -> float:
    s = summarize(design, model, None, weights)
    return 0.0 if s.singular else 1.0 / s.tr_w


def aps_value(design: Design, model: ModelSpec, weights=None, alpha: float = DEFAULT_ALPHA) -> float:
    d, _ = df_accounting(design, model)
    if d == 0:
        return 0.0
    return as_value(design, model, weights) / _interval_factor(1, d, alpha)


def i_value(design: Design, model: ModelSpec, region: Region) -> float:
    s = summarize(design, model, region)
    return 0.0 if s.singular else 1.0 / s.tr_m


def ip_value(design: Design, model: ModelSpec, region: Region, alpha: float = DEFAULT_ALPHA) -> float:
    d, _ = df_accounting(design, model)
    if d == 0:
        return 0.0
    return i_value(design, model, region) / _interval_factor(1, d, alpha)


def id_value(design: Design, model: ModelSpec, region: Region) -> float:
    s = summarize(design, model, region)
    return 0.0 if s.singular else 1.0 / s.tr_m0


def idp_value(design: Design, model: ModelSpec, region: Region, alpha: float = DEFAULT_ALPHA) -> float:
    d, _ = df_accounting(design, model)
    if d == 0:
        return 0.0
    return id_value(design, model, region) / _interval_factor(1, d, alpha)


def single_values(summary: DesignSummary, alphas=(DEFAULT_ALPHA,) * 4) -> dict[str, float]:
    """All eight single criteria from one summary (0 where undefined)."""
    s = summary
    if s.singular:
        return {c: 0.0 for c in CRITERIA}
    ds = math.exp((s.logdet - math.log(s.n)) / (s.p - 1))

    def pe(df1, alpha):
        return math.inf if s.d == 0 else f_quantile(df1, s.d, 1 - alpha)

    return {
        "DS": ds,
        "DPS": ds / pe(s.p - 1, alphas[0]),
        "AS": 1.0 / s.tr_w,
        "APS": 1.0 / (s.tr_w * pe(1, alphas[1])),
        "I": 1.0 / s.tr_m,
        "IP": 1.0 / (s.tr_m * pe(1, alphas[2])),
        "ID": 1.0 / s.tr_m0,
        "IDP": 1.0 / (s.tr_m0 * pe(1, alphas[3])),
    }


def compound_value(design: Design, model: ModelSpec, region: Region, cfg: CriterionConfig) -> CriterionValue:
    s = summarize(design, model, region, cfg.weight_vector(model))
    return compound_from_summary(s, cfg)


def compound_from_summary(s: DesignSummary, cfg: CriterionConfig) -> CriterionValue:
    k = cfg.kappas
    comps: dict[str, float] = {"n": s.n, "d": s.d, "lof": s.lof}
    if s.singular:
        return CriterionValue(0.0, False, -math.inf, comps)
    comps["logdet_XtX"] = s.logdet
    if k[0] + k[1] > 0:
        comps["det_X0QX0^(1/(p-1))"] = math.exp((s.logdet - math.log(s.n)) / (s.p - 1))
    if k[2] + k[3] > 0:
        comps["tr_W_inv"] = s.tr_w
    if k[4] > 0:
        comps["n_minus_d"] = s.n - s.d
    if k[5] + k[6] > 0:
        comps["tr_M_inv"] = s.tr_m
    if k[7] + k[8] > 0:
        comps["tr_M0_inv"] = s.tr_m0
    for idx, name, df1 in ((1, "F_DP", s.p - 1), (2, "F_AP", 1), (6, "F_IP", 1), (8, "F_IDP", 1)):
        if k[idx] > 0:
            comps[name] = math.inf if s.d == 0 else f_quantile(df1, s.d, 1 - cfg.alphas[(1, 2, 6, 8).index(idx)])
    if cfg.uses_pure_error and s.d == 0:
        return CriterionValue(0.0, False, -math.inf, comps)
    logq = LogQuantiles(s.p, s.n, cfg.alphas)
    lv = float(compound_log(k, s.p, s.n, s.d, s.logdet, s.tr_w, s.tr_m, s.tr_m0, logq))
    return CriterionValue(math.exp(lv), True, lv, comps)


@dataclass
class EfficiencyRow:
    name: str
    d: int
    lof: int
    values: dict[str, float]
    efficiencies: dict[str, float]


@dataclass
class EfficiencyTable:
    rows: list[EfficiencyRow]
    best: dict[str, float]

    def efficiency(self, name: str, criterion: str) -> float:
        for row in self.rows:
            if row.name == name:
                return row.efficiencies[criterion]
        raise KeyError(name)

    def to_csv(self, dest=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["design", "pe_df", "lof_df"] + [f"eff_{c}" for c in CRITERIA] + [f"value_{c}" for c in CRITERIA])
        for r in self.rows:
            w.writerow(
                [r.name, r.d, r.lof]
                + [_fmt_eff(r.efficiencies[c]) for c in CRITERIA]
                + [f"{r.values[c]:.10g}" for c in CRITERIA]
            )
        text = buf.getvalue()
        if dest is not None:
            dest.write(text)
        return text

    def to_text(self) -> str:
        head = ["design", "df(PE,LoF)"] + [CRITERION_LABELS[c] for c in CRITERIA]
        body = [
            [r.name, f"({r.d},{r.lof})"] + [_fmt_eff(r.efficiencies[c]) or "-" for c in CRITERIA] for r in self.rows
        ]
        widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
        lines = []
        for i, row in enumerate([head] + body):
            cells = [str(c).ljust(wd) if j == 0 else str(c).rjust(wd) for j, (c, wd) in enumerate(zip(row, widths))]
            lines.append("  ".join(cells))
            if i == 0:
                lines.append("  ".join("-" * wd for wd in widths))
        return "\n".join(lines) + "\n"


def _fmt_eff(e: float) -> str:
    return "" if math.isnan(e) else f"{e:.2f}"


def efficiency_table(
    designs: Sequence[Design] | Mapping[str, Design],
    model: ModelSpec,
    region: Region,
    weights=None,
    alphas=(DEFAULT_ALPHA,) * 4,
    reference: Mapping[str, float] | None = None,
) -> EfficiencyTable:
    """Efficiencies 100 * value / best for the eight single criteria.

    ``best`` is the maximum over the supplied designs unless ``reference``
    provides an external optimum value for a criterion.  Columns whose best
    value is zero (e.g. P-criteria when no design has pure error) are NaN.
    """
    if isinstance(designs, Mapping):
        items = list(designs.items())
    else:
        items = [(d.name or f"design{i + 1}", d) for i, d in enumerate(designs)]
    if not items:
        raise ValueError("efficiency table needs at least one design")
    q = items[0][1].q
    if any(d.q != q for _, d in items):
        raise ValueError("all designs must share the same number of factors")
    w = default_weights(model) if weights is None else np.asarray(weights, dtype=float)
    values = []
    for name, des in items:
        s = summarize(des, model, region, w)
        values.append((name, s, single_values(s, alphas)))
    best = {c: max(v[2][c] for v in values) for c in CRITERIA}
    if reference:
        for key, v in reference.items():
            key = key.upper()
            if key not in best:
                raise ValueError(f"unknown reference criterion {key!r}")
            best[key] = float(v)
    rows = []
    for name, s, vals in values:
        eff = {c: (100.0 * vals[c] / best[c] if best[c] > 0 else math.nan) for c in CRITERIA}
        rows.append(EfficiencyRow(name, s.d, s.lof, vals, eff))
    return EfficiencyTable(rows, best)
