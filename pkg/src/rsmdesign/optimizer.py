"""Multistart point-exchange search over a candidate set.

Each start draws n candidates with replacement, then sweeps the run
positions; at every position all candidates are scored as replacements
with rank-two updates of (X'X)^-1 and the best one is taken if it improves
the criterion.  A start ends after a pass with no exchange.

Designs whose criterion is undefined (singular X'X, or d = 0 while a
pure-error component is active) are ordered by (d, rank of X'X) so the
search can climb out of them.  d is capped at 1 in that ordering, since
one replicate is all a defined value needs; an uncapped d would trap the
search in replicate-heavy singular designs that no single exchange can fix.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .criteria import IMPROVE_TOL, CriterionConfig, CriterionValue, LogQuantiles, compound_log, compound_value
from .model import CandidateSet, Design, ModelSpec, expand
from .numerics import SINGULAR_PIVOT, SingularMatrixError, cho_solve, cholesky
from .region import difference_moment_matrix, moment_matrix

WORKERS_ENV = "RSMDESIGN_WORKERS"
# det(X'X) ratio below which a rank-two update is treated as singular
_DELTA_SINGULAR = 1e-10


class InfeasibleSearchError(ValueError):
    """No reachable design has a defined criterion value."""


@dataclass(frozen=True, eq=False)
class SearchConfig:
    n: int
    candidate: CandidateSet
    criterion: CriterionConfig
    model: ModelSpec | None = None
    starts: int = 100
    max_passes: int = 50
    seed: int = 0
    initial: Design | None = None  # forced design for start 0

    def __post_init__(self):
        if self.model is None:
            object.__setattr__(self, "model", ModelSpec.full_quadratic(self.candidate.region.q))
        if self.starts < 1:
            raise ValueError("starts must be >= 1")
        if self.max_passes < 0:
            raise ValueError("max_passes must be >= 0")
        if len(self.candidate) == 0:
            raise ValueError("candidate set is empty")
        if self.initial is not None and self.initial.n != self.n:
            raise ValueError("initial design must have n runs")

    @property
    def region(self):
        return self.candidate.region


@dataclass
class StartRecord:
    index: int
    passes: int
    value: float
    defined: bool
    trace: list[float] = field(default_factory=list)  # incumbent log value after each exchange


@dataclass
class SearchResult:
    best: Design
    value: CriterionValue
    history: list[StartRecord]
    evaluations: int
    best_indices: np.ndarray
    best_start: int


class _Engine:
    """Candidate-set state shared by every start of one search."""

    def __init__(self, cfg: SearchConfig):
        self.cfg = cfg
        model = cfg.model
        self.n = cfg.n
        self.p = model.p
        self.f = expand(model, cfg.candidate.points).reshape(len(cfg.candidate), model.p)
        self.m = len(self.f)
        k = cfg.criterion.kappas
        self.kappas = k
        self.needs_pe = cfg.criterion.uses_pure_error
        self.logq = LogQuantiles(self.p, self.n, cfg.criterion.alphas)
        # trace matrices of the active components only
        self.tmats = {}
        if k[2] + k[3] > 0:
            self.tmats["w"] = np.diag(cfg.criterion.weight_vector(model))
        if k[5] + k[6] > 0:
            self.tmats["m"] = np.asarray(moment_matrix(cfg.region, model))
        if k[7] + k[8] > 0:
            self.tmats["m0"] = np.asarray(difference_moment_matrix(cfg.region, model))
        self.evaluations = 0

    # -- full (authoritative) evaluation --------------------------------
    def state(self, idx: np.ndarray) -> "_State":
        x = self.f[idx]
        a = x.T @ x
        counts = np.bincount(idx, minlength=self.m)
        d = self.n - int(np.count_nonzero(counts))
        self.evaluations += 1
        try:
            low = cholesky(a)
        except SingularMatrixError:
            return _State(idx, counts, self._d_key(d), a, None, -math.inf, None, {}, _rank(a))
        ainv = cho_solve(low, np.eye(self.p))
        ainv = 0.5 * (ainv + ainv.T)
        logdet = float(2.0 * np.sum(np.log(np.diag(low))))
        traces = {key: float(np.sum(t * ainv)) for key, t in self.tmats.items()}
        if self.needs_pe and d == 0:
            lv = None
        else:
            lv = float(self._log(d, logdet, traces))
        return _State(idx, counts, self._d_key(d), a, ainv, logdet, lv, traces, self.p)

    def _d_key(self, d):
        """Pure-error df as it counts when ranking undefined designs."""
        if not self.needs_pe:
            return np.zeros_like(d) if isinstance(d, np.ndarray) else 0
        return np.minimum(d, 1)

    def _log(self, d, logdet, traces):
        one = 1.0
        return compound_log(
            self.kappas, self.p, self.n, d, logdet,
            traces.get("w", one), traces.get("m", one), traces.get("m0", one), self.logq,
        )

    # -- exchange scoring ----------------------------------------------
    def best_exchange(self, st: "_State", pos: int):
        """Best replacement for run ``pos``: (candidate, predicted key)."""
        if st.ainv is None:
            return self._best_exchange_singular(st, pos)
        o = st.idx[pos]
        fa = st.fa  # F A^-1
        a_co = fa @ self.f[o]
        a_oo = a_co[o]
        a_cc = st.a_cc
        delta = (1.0 + a_cc) * (1.0 - a_oo) + a_co * a_co
        ok = delta > _DELTA_SINGULAR
        with np.errstate(divide="ignore", invalid="ignore"):
            logdet = st.logdet + np.log(np.where(ok, delta, 1.0))
            traces = {}
            for key in self.tmats:
                fg = st.fg[key]
                g_co = fg @ self.f[o]
                g_oo = g_co[o]
                g_cc = st.g_cc[key]
                num = (a_oo - 1.0) * g_cc - 2.0 * a_co * g_co + (1.0 + a_cc) * g_oo
                traces[key] = st.traces[key] + num / np.where(ok, delta, 1.0)
        d_new = self._d_after(st, o)
        self.evaluations += self.m
        defined = ok.copy()
        for key in traces:
            defined &= traces[key] > 0
        if self.needs_pe:
            defined &= d_new > 0
        lv = np.full(self.m, -np.inf)
        if defined.any():
            sel = np.flatnonzero(defined)
            lv[sel] = self._log(d_new[sel], logdet[sel], {k: v[sel] for k, v in traces.items()})
        if defined.any():
            # first candidate within the improvement tolerance of the best wins
            c = int(np.flatnonzero(lv >= lv[defined].max() - IMPROVE_TOL)[0])
            return c, (1, float(lv[c]))
        rank = np.where(ok, self.p, self.p - 1)
        return self._best_undefined(self._d_key(d_new), rank)

    def _best_exchange_singular(self, st, pos):
        o = st.idx[pos]
        base = st.a - np.outer(self.f[o], self.f[o])
        stack = base[None, :, :] + self.f[:, :, None] * self.f[:, None, :]
        eig = np.linalg.eigvalsh(stack)
        top = np.maximum(eig[:, -1:], 1e-300)
        rank = np.sum(eig > SINGULAR_PIVOT * top, axis=1)
        d_new = self._d_after(st, o)
        self.evaluations += self.m
        full = np.flatnonzero(rank == self.p)
        best_c, best_key = None, None
        for c in full:
            if self.needs_pe and d_new[c] == 0:
                continue
            idx = st.idx.copy()
            idx[pos] = c
            s2 = self.state(idx)
            if s2.defined and (best_key is None or s2.log_value > best_key[1]):
                best_c, best_key = int(c), (1, s2.log_value)
        if best_c is not None:
            return best_c, best_key
        return self._best_undefined(self._d_key(d_new), rank)

    @staticmethod
    def _best_undefined(d_new, rank):
        order = np.lexsort((rank, d_new))  # primary d, then rank
        top = order[-1]
        ties = np.flatnonzero((d_new == d_new[top]) & (rank == rank[top]))
        c = int(ties[0])
        return c, (0, int(d_new[c]), int(rank[c]))

    def _d_after(self, st, o):
        cnt = st.counts.copy()
        cnt[o] -= 1
        t = int(np.count_nonzero(cnt))
        return self.n - (t + (cnt == 0).astype(int))

    def prepare(self, st: "_State"):
        """Precompute per-state products used by every position."""
        if st.ainv is None:
            return st
        st.fa = self.f @ st.ainv
        st.a_cc = np.einsum("ij,ij->i", st.fa, self.f)
        st.fg, st.g_cc = {}, {}
        for key, t in self.tmats.items():
            g = st.ainv @ t @ st.ainv
            fg = self.f @ g
            st.fg[key] = fg
            st.g_cc[key] = np.einsum("ij,ij->i", fg, self.f)
        return st


def _rank(a):
    eig = np.linalg.eigvalsh(a)
    top = max(eig[-1], 1e-300)
    return int(np.sum(eig > SINGULAR_PIVOT * top))


@dataclass
class _State:
    idx: np.ndarray
    counts: np.ndarray
    d_key: int  # pure-error df capped for ranking, see _d_key
    a: np.ndarray
    ainv: np.ndarray | None
    logdet: float
    log_value: float | None
    traces: dict
    rank: int
    fa: np.ndarray | None = None
    a_cc: np.ndarray | None = None
    fg: dict | None = None
    g_cc: dict | None = None

    @property
    def defined(self) -> bool:
        return self.log_value is not None

    @property
    def key(self):
        if self.defined:
            return (1, self.log_value)
        return (0, self.d_key, self.rank)


def _better(new, cur) -> bool:
    if new[0] != cur[0]:
        return new[0] > cur[0]
    if new[0] == 1:
        return new[1] > cur[1] + IMPROVE_TOL
    return new[1:] > cur[1:]


def _start_rng(seed: int, start: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(start,)))


def _run_start(cfg: SearchConfig, start: int):
    eng = _Engine(cfg)
    if start == 0 and cfg.initial is not None:
        idx = cfg.candidate.index_of(cfg.initial)
    else:
        idx = _start_rng(cfg.seed, start).integers(0, eng.m, size=cfg.n)
    st = eng.prepare(eng.state(idx))
    trace = [st.log_value if st.defined else -math.inf]
    passes = 0
    while passes < cfg.max_passes:
        passes += 1
        changed = False
        for pos in range(cfg.n):
            c, key = eng.best_exchange(st, pos)
            if c == st.idx[pos] or not _better(key, st.key):
                continue
            idx = st.idx.copy()
            idx[pos] = c
            new = eng.state(idx)
            # the rank-two prediction is only trusted if the full evaluation agrees
            if not _better(new.key, st.key):
                continue
            st = eng.prepare(new)
            trace.append(st.log_value if st.defined else -math.inf)
            changed = True
        if not changed:
            break
    return start, st.idx, st.key, passes, trace, eng.evaluations


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def exchange_search(cfg: SearchConfig, workers: int | None = None, progress=None) -> SearchResult:
    """Run ``cfg.starts`` independent exchange searches and keep the best.

    Deterministic for a fixed seed: start k draws from its own stream
    (seed, k) and results are reduced in start order, so the worker count
    does not change the answer.  ``progress`` is a file (e.g. sys.stderr)
    receiving one line per start.
    """
    model = cfg.model
    if cfg.n < model.p:
        raise InfeasibleSearchError(
            f"n={cfg.n} runs cannot estimate p={model.p} parameters; every design has singular X'X"
        )
    workers = default_workers() if workers is None else max(1, workers)
    starts = range(cfg.starts)
    if workers > 1 and cfg.starts > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_start, [cfg] * cfg.starts, starts))
    else:
        outcomes = [_run_start(cfg, s) for s in starts]

    history = []
    best = None
    evaluations = 0
    for start, idx, key, passes, trace, evals in outcomes:
        evaluations += evals
        defined = key[0] == 1
        value = math.exp(key[1]) if defined else 0.0
        history.append(StartRecord(start, passes, value, defined, trace))
        if progress is not None:
            print(f"start {start} passes {passes} value {value:.10g}", file=progress)
        if best is None or _better(key, best[1]):
            best = (start, key, idx)
    start, key, idx = best
    if key[0] != 1:
        raise InfeasibleSearchError(
            f"no start reached a design with a defined criterion (best had rank {key[2]} of p={model.p}"
            f"{', no pure-error df' if cfg.criterion.uses_pure_error and key[1] == 0 else ''})"
        )
    design = Design(cfg.candidate.points[idx], name="exchange_best")
    value = compound_value(design, model, cfg.region, cfg.criterion)
    return SearchResult(design, value, history, evaluations, np.array(idx), start)


@dataclass
class VerifyReport:
    candidate_value: float
    best_value: float
    gap: float  # relative: (best - candidate) / best, positive when improved upon
    improved: bool
    search: SearchResult

    @property
    def verdict(self) -> str:
        return "improved upon" if self.improved else "not improved upon"


def verify_optimal(candidate_design: Design, cfg: SearchConfig, rel_tol: float = 1e-9, workers=None, progress=None) -> VerifyReport:
    """Search, then report whether the given design was beaten.

    A design that is not improved upon is only that: the search is heuristic.
    """
    result = exchange_search(cfg, workers=workers, progress=progress)
    cand = compound_value(candidate_design, cfg.model, cfg.region, cfg.criterion)
    best = result.value.value
    cv = cand.value if cand.defined else 0.0
    improved = cv < best * (1 - rel_tol)
    gap = (best - cv) / best if best > 0 else 0.0
    return VerifyReport(cv, best, gap, improved, result)
