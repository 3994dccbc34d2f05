"""The dual pure-jump process: rate enumeration and Gillespie simulation.

From a state n the process can coalesce (n -> n - e_i at one locus), mutate
(n -> n - e_i + e_j within a locus), branch at one locus (n -> n + e_j,
driven by h and by cross-locus coupling), or branch at two loci at once
(n -> n + e_j + e_h across an unordered locus pair).  Every rate is a
nonnegative prefactor times a ratio k(target)/k(source) supplied by a
k-oracle.  Zero-rate events are never materialized.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .model import ModelParams, validate_dual_state

__all__ = [
    "RateEvent",
    "EVENT_KINDS",
    "dual_rates",
    "explicit_diag",
    "q_diag",
    "DualPath",
    "gillespie_simulate",
    "RateTable",
    "simulate_dual_batch",
]

COALESCENCE = "coalescence"
MUTATION = "mutation"
SINGLE_SELECTION = "single_selection"
DOUBLE_SELECTION = "double_selection"
EVENT_KINDS = (COALESCENCE, MUTATION, SINGLE_SELECTION, DOUBLE_SELECTION)
_KIND_CODE = {kind: i for i, kind in enumerate(EVENT_KINDS)}

# net change of the lineage count per event kind
_KIND_DELTA = {COALESCENCE: -1, MUTATION: 0, SINGLE_SELECTION: 1, DOUBLE_SELECTION: 2}


@dataclass(frozen=True)
class RateEvent:
    """One admissible jump of the dual process.

    indices holds the 0-based identifiers of the event: (l, i) for
    coalescence, (l, i, j) for mutation, (l, j) for single-locus selection
    and (l, j, r, h) for double-locus selection.
    """

    kind: str
    source: np.ndarray
    target: np.ndarray
    rate: float
    indices: tuple

    def __post_init__(self):
        if self.rate < 0:
            raise ParameterError(f"negative rate {self.rate} for {self.kind} event")
        if int(self.target.sum() - self.source.sum()) != _KIND_DELTA[self.kind]:
            raise ParameterError(f"{self.kind} event violates its conservation structure")


def _iter_event_specs(params: ModelParams, n: np.ndarray):
    """Yield (kind, target, prefactor, indices) for all nonzero prefactors."""
    L = params.num_loci
    offs = params.offsets
    totals = params.locus_totals(n)
    h = params.h
    J = params.J

    for l in range(L):
        off = offs[l]
        m = params.alleles[l]
        nb = n[off:off + m]
        # coalescence
        for i in range(m):
            ni = int(nb[i])
            if ni >= 2:
                target = n.copy()
                target[off + i] -= 1
                yield COALESCENCE, target, 0.5 * ni * (ni - 1), (l, i)
        # mutation: a type-i lineage is re-labelled j; the prefactor carries
        # the forward rate u_{ji} (from j to i), as the duality dictates
        u = params.mutation[l]
        for i in range(m):
            ni = int(nb[i])
            if ni == 0:
                continue
            for j in range(m):
                if j == i or u[j, i] == 0.0:
                    continue
                target = n.copy()
                target[off + i] -= 1
                target[off + j] += 1
                yield MUTATION, target, ni * u[j, i], (l, i, j)
        # single-locus selection (single-locus viabilities plus the pull of
        # lineages at other loci through the coupling matrix)
        for j in range(m):
            pref = totals[l] * float(np.sum(h[off:off + m]) - h[off + j])
            for r in range(L):
                if r == l:
                    continue
                nr = n[params.block(r)]
                pref += float(nr @ J[off + j, params.block(r)])
            if pref > 0.0:
                target = n.copy()
                target[off + j] += 1
                yield SINGLE_SELECTION, target, pref, (l, j)
    # double-locus selection over unordered pairs (enumerated once, r > l);
    # the prefactor sums the couplings of every allele couple except (j, h)
    for l in range(L):
        for r in range(l + 1, L):
            pair_total = float(totals[l] + totals[r])
            if pair_total == 0.0:
                continue
            Jb = J[params.block(l), params.block(r)]
            total_J = float(Jb.sum())
            for j in range(params.alleles[l]):
                for hh in range(params.alleles[r]):
                    pref = pair_total * (total_J - Jb[j, hh])
                    if pref > 0.0:
                        target = n.copy()
                        target[params.offsets[l] + j] += 1
                        target[params.offsets[r] + hh] += 1
                        yield DOUBLE_SELECTION, target, pref, (l, j, r, hh)


def dual_rates(params: ModelParams, n, oracle) -> list:
    """Complete list of admissible jumps from n with their rates."""
    n = validate_dual_state(params, n)
    events = []
    for kind, target, pref, idx in _iter_event_specs(params, n):
        rate = pref * oracle.ratio(target, n)
        events.append(RateEvent(kind=kind, source=n, target=target, rate=rate, indices=idx))
    return events


def explicit_diag(params: ModelParams, n) -> float:
    """The diagonal entry q(n, n) in closed form (no k involved).

    This is the coefficient that makes each row of the dual rate matrix sum
    to zero when the oracle is exact; comparing it with minus the sum of the
    enumerated rates is the recursion-residual check.
    """
    n = validate_dual_state(params, n)
    totals = params.locus_totals(n)
    total = 0.0
    for l in range(params.num_loci):
        b = params.block(l)
        nb = n[b].astype(float)
        nl = float(totals[l])
        total += 0.5 * nl * (nl - 1.0)
        u = params.mutation[l]
        total += float(nb @ (u.sum(axis=1) - np.diag(u)))
        hb = params.h[b]
        total += float(np.sum(nb) * np.sum(hb) - nb @ hb)
        for r in range(params.num_loci):
            if r != l:
                total += nl * float(np.sum(params.J[b, params.block(r)]))
    return -total


def q_diag(params: ModelParams, n, oracle) -> float:
    """Diagonal rate as minus the sum of all off-diagonal rates."""
    return -sum(ev.rate for ev in dual_rates(params, n, oracle))


# -- single-path Gillespie simulation -----------------------------------------


@dataclass
class DualPath:
    """A simulated dual trajectory: state after each event plus metadata."""

    times: np.ndarray
    states: np.ndarray            # (len(times), M), states[i] holds from times[i]
    events: list                  # RateEvent per jump, aligned with times[1:]
    truncated: bool
    cap: int
    horizon: float

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def gillespie_simulate(params: ModelParams, n0, horizon: float, oracle, seed: int = 0,
                       cap: int = 200) -> DualPath:
    """Simulate the dual jump process on [0, horizon].

    Stops at the horizon, at an absorbing state, or (with the truncation
    flag set, not an error) as soon as the total lineage count exceeds cap;
    branching events make the state grow, so the cap keeps paths finite.
    """
    n = validate_dual_state(params, n0)
    if horizon < 0:
        raise ParameterError("horizon must be nonnegative")
    if cap < int(n.sum()):
        raise ParameterError(f"cap {cap} below initial total {int(n.sum())}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    times = [0.0]
    states = [n.copy()]
    events: list = []
    truncated = False
    t = 0.0
    while True:
        evs = dual_rates(params, n, oracle)
        total = sum(ev.rate for ev in evs)
        if total <= 0.0:
            break  # absorbing
        t_next = t + rng.exponential(1.0 / total)
        if t_next >= horizon:
            break
        t = t_next
        pick = rng.random() * total
        acc = 0.0
        chosen = evs[-1]
        for ev in evs:
            acc += ev.rate
            if pick < acc:
                chosen = ev
                break
        n = chosen.target
        times.append(t)
        states.append(n.copy())
        events.append(chosen)
        if int(n.sum()) > cap:
            truncated = True
            break
    return DualPath(
        times=np.asarray(times),
        states=np.asarray(states),
        events=events,
        truncated=truncated,
        cap=cap,
        horizon=horizon,
    )


def write_dual_path_csv(path_obj: DualPath, params: ModelParams, fh) -> None:
    """Event CSV: t, event_kind, l, i, j, r, h, n_flat... (1-based indices).

    One row per jump holding the post-jump state; a path with no events
    produces a header-only file.  A truncated path gets a trailing comment
    line as its metadata row.
    """
    cols = ["t", "event_kind", "l", "i", "j", "r", "h"]
    cols += [f"n_{l + 1}_{i + 1}" for l in range(params.num_loci) for i in range(params.alleles[l])]
    fh.write(",".join(cols) + "\n")

    def row(t, kind, idx, state):
        l = i = j = r = h = ""
        if kind == COALESCENCE:
            l, i = idx[0] + 1, idx[1] + 1
        elif kind == MUTATION:
            l, i, j = idx[0] + 1, idx[1] + 1, idx[2] + 1
        elif kind == SINGLE_SELECTION:
            l, j = idx[0] + 1, idx[1] + 1
        elif kind == DOUBLE_SELECTION:
            l, j, r, h = idx[0] + 1, idx[1] + 1, idx[2] + 1, idx[3] + 1
        lead = [f"{t:.12g}", kind, str(l), str(i), str(j), str(r), str(h)]
        fh.write(",".join(lead + [str(int(v)) for v in state]) + "\n")

    for t, ev, state in zip(path_obj.times[1:], path_obj.events, path_obj.states[1:]):
        row(t, ev.kind, ev.indices, state)
    if path_obj.truncated:
        fh.write(f"# truncated: total lineage count exceeded cap {path_obj.cap}\n")


# -- replicate batches through a lazily expanded rate table --------------------


class RateTable:
    """State-indexed dual rates, expanded lazily as states are visited.

    Rows are stored as parallel arrays (cumulative rates, target state ids),
    which is the layout both simulation kernels consume.  log k values are
    kept per state so duality functionals can be evaluated without further
    oracle calls.
    """

    def __init__(self, params: ModelParams, oracle):
        self.params = params
        self.oracle = oracle
        self._index: dict = {}
        self._lock = threading.RLock()
        self.states: list = []
        self.sum_n: list = []
        self.log_k: list = []
        self.row_cum: list = []
        self.row_target: list = []
        self.row_kind: list = []
        self.total_rate: list = []

    def state_id(self, n) -> int:
        key = tuple(int(v) for v in n)
        sid = self._index.get(key)
        if sid is None:
            with self._lock:
                sid = self._index.get(key)
                if sid is None:
                    sid = len(self.states)
                    arr = np.asarray(key, dtype=np.int64)
                    self.states.append(arr)
                    self.sum_n.append(int(arr.sum()))
                    self.log_k.append(self.oracle.log_k(arr))
                    self.row_cum.append(None)
                    self.row_target.append(None)
                    self.row_kind.append(None)
                    self.total_rate.append(-1.0)
                    self._index[key] = sid
        return sid

    def ensure(self, sid: int) -> None:
        if self.row_cum[sid] is not None:
            return
        with self._lock:
            if self.row_cum[sid] is not None:
                return
            events = dual_rates(self.params, self.states[sid], self.oracle)
            rates = np.array([ev.rate for ev in events], dtype=float)
            targets = np.array([self.state_id(ev.target) for ev in events], dtype=np.int64)
            kinds = np.array([_KIND_CODE[ev.kind] for ev in events], dtype=np.int8)
            self.row_cum[sid] = np.cumsum(rates)
            self.row_target[sid] = targets
            self.row_kind[sid] = kinds
            self.total_rate[sid] = float(rates.sum())


def simulate_dual_batch(params: ModelParams, n0, horizon: float, oracle, seed: int,
                        replicates: int, cap: int = 200, table: RateTable | None = None,
                        rep_start: int = 0):
    """Simulate many dual paths; returns (final_sids, truncated, n_events, table).

    Truncated paths stop early at the first over-cap state; their final sid
    refers to that state and callers are expected to exclude them from
    horizon-time functionals.
    """
    from ._kernels import gillespie_finals

    n0 = validate_dual_state(params, n0)
    if cap < int(n0.sum()):
        raise ParameterError(f"cap {cap} below initial total {int(n0.sum())}")
    if table is None:
        table = RateTable(params, oracle)
    sid0 = table.state_id(n0)
    finals, truncated, n_events = gillespie_finals(
        table, sid0, float(horizon), int(seed), int(replicates), int(cap), rep_start
    )
    return finals, truncated, n_events, table
