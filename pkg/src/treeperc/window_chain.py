"""Exact branching-process representation of the cluster by window types.

The trace of the cluster in the height-(k-1) slab below a vertex (its
"window") evolves as a multi-type branching process over nonempty window
bitmasks.  The one-step law for the window of child ``i`` of a vertex with
window ``A`` factorizes:

* slots of height <= k-2 are determined: slot u is set iff ``i.u`` is in A;
* each height-(k-1) slot u is set independently with probability
  ``1 - (1 - p*a) * (1 - q*b)``, where a indicates that the slot's parent
  ``i.parent(u)`` is in A (short edge from the parent) and b indicates that
  the base vertex itself is in A (long edge from the base).

These are exactly the edges a height-layered exploration has not queried
before, so the chain is Markov and its mean offspring matrix is available in
closed form.  ``build_offspring_matrix`` materializes it as a sparse matrix
over all nonempty windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ParameterError, SizeCapError
from .tree import ROOT, TreeParams, parent, slot_index, slot_vertex

#: Enumerating a child-window law costs 2^(top slots); refuse beyond this.
MAX_TOP_SLOTS = 16

_POP16 = None


def _popcount(a: np.ndarray) -> np.ndarray:
    """Vectorized popcount for nonnegative integers below 2^32."""
    global _POP16
    if _POP16 is None:
        _POP16 = np.array(
            [bin(i).count("1") for i in range(1 << 16)], dtype=np.uint8
        )
    a = np.asarray(a, dtype=np.int64)
    return _POP16[a & 0xFFFF].astype(np.int64) + _POP16[(a >> 16) & 0xFFFF]


@dataclass(frozen=True)
class WindowTransition:
    """One-step law of the window of child ``i`` given parent window ``A``."""

    child: int
    deterministic: int  # window bits over slots of height <= k-2
    top_probs: tuple  # activation probability per height-(k-1) slot, slot order


class SparseOffspringMatrix:
    """Mean offspring rates M(A, B) over nonempty windows, stored row-sparse.

    Windows are encoded as bitmask integers in [1, 2^W); row/column index
    ``w - 1`` corresponds to window ``w``.
    """

    def __init__(self, params: TreeParams, p: float, q: float, csr: sparse.csr_matrix):
        self.params = params
        self.p = p
        self.q = q
        self.csr = csr

    @property
    def n_types(self) -> int:
        return self.csr.shape[0]

    def rate(self, a: int, b: int) -> float:
        return float(self.csr[a - 1, b - 1])

    def row(self, a: int) -> list[tuple[int, float]]:
        """Entries (B, M(A,B)) of one row, sorted by column window."""
        sl = slice(self.csr.indptr[a - 1], self.csr.indptr[a])
        return [
            (int(j) + 1, float(v))
            for j, v in zip(self.csr.indices[sl], self.csr.data[sl])
        ]

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.csr.sum(axis=1)).ravel()

    def to_mapping(self) -> dict[int, dict[int, float]]:
        return {a: dict(self.row(a)) for a in range(1, self.n_types + 1)}

    def iter_entries(self):
        """Yield (A, B, rate) in deterministic row-major, column-sorted order."""
        coo = self.csr.tocoo()
        for a, b, v in zip(coo.row, coo.col, coo.data):
            yield int(a) + 1, int(b) + 1, float(v)


def _child_slot_maps(params: TreeParams):
    """Per child digit i: slot targets of the deterministic part and slot
    sources of the top-slot short-edge indicators."""
    d, base, t = params.d, params.top_slot_base, params.n_top_slots
    low_targets = []
    top_sources = []
    for i in range(1, d + 1):
        low_targets.append(
            np.array(
                [slot_index((i,) + slot_vertex(j, params), params) for j in range(base)],
                dtype=np.int64,
            )
        )
        top_sources.append(
            np.array(
                [
                    slot_index((i,) + parent(slot_vertex(base + u, params)), params)
                    for u in range(t)
                ],
                dtype=np.int64,
            )
        )
    return low_targets, top_sources


def window_transition(a: int, child: int, p: float, q: float, params: TreeParams) -> WindowTransition:
    """Transition data for one (parent window, child digit) pair."""
    if a <= 0:
        raise ParameterError("parent window must be nonempty")
    base, t = params.top_slot_base, params.n_top_slots
    det = 0
    for j in range(base):
        if a >> slot_index((child,) + slot_vertex(j, params), params) & 1:
            det |= 1 << j
    b = a & 1
    probs = []
    for u in range(t):
        src = slot_index((child,) + parent(slot_vertex(base + u, params)), params)
        aa = a >> src & 1
        probs.append(1.0 - (1.0 - p * aa) * (1.0 - q * b))
    return WindowTransition(child=child, deterministic=det, top_probs=tuple(probs))


def child_window_dist(a: int, child: int, p: float, q: float, params: TreeParams) -> dict[int, float]:
    """Exact pmf over the child's window (0 encodes the empty window)."""
    if params.n_top_slots > MAX_TOP_SLOTS:
        raise SizeCapError(
            f"child-window support has 2^{params.n_top_slots} outcomes; "
            "use the sampling interface instead"
        )
    tr = window_transition(a, child, p, q, params)
    base = params.top_slot_base
    pmf = {tr.deterministic: 1.0}
    for u, pi in enumerate(tr.top_probs):
        nxt: dict[int, float] = {}
        bit = 1 << (base + u)
        for w, pr in pmf.items():
            if pi < 1.0:
                nxt[w] = nxt.get(w, 0.0) + pr * (1.0 - pi)
            if pi > 0.0:
                nxt[w | bit] = nxt.get(w | bit, 0.0) + pr * pi
        pmf = nxt
    return pmf


def initial_window_dist(params: TreeParams, p: float) -> dict[int, float]:
    """Law of the root's window: short-edge subtrees truncated at height k-1.

    Supported on windows that contain the root slot and are closed under
    taking parents; the empty window has mass zero since the root always
    belongs to its own cluster.
    """
    base = params.top_slot_base
    d = params.d
    # grow the subtree level by level: state maps window -> prob
    pmf = {1: 1.0}
    for j in range(base):  # slots whose children lie in the slab
        child_slots = [d * j + c for c in range(1, d + 1)]
        nxt: dict[int, float] = {}
        for w, pr in pmf.items():
            if not w >> j & 1:
                nxt[w] = nxt.get(w, 0.0) + pr
                continue
            for mask in range(1 << d):
                prob = pr
                add = 0
                for c in range(d):
                    if mask >> c & 1:
                        prob *= p
                        add |= 1 << child_slots[c]
                    else:
                        prob *= 1.0 - p
                if prob > 0.0:
                    nxt[w | add] = nxt.get(w | add, 0.0) + prob
        pmf = nxt
    return pmf


def build_offspring_matrix(
    params: TreeParams, p: float, q: float, *, chunk: int = 4096
) -> SparseOffspringMatrix:
    """Exact mean offspring matrix over all 2^W - 1 nonempty windows.

    Vectorized over rows: for each child digit the deterministic slot map is a
    bit gather, and the top-slot product law depends on the row only through
    the indicator vector of occupied parent slots, so probabilities reduce to
    popcount-indexed power tables.
    """
    if params.n_top_slots > MAX_TOP_SLOTS:
        raise SizeCapError(
            f"offspring matrix rows need 2^{params.n_top_slots} entries each; "
            f"(d={params.d}, k={params.k}) exceeds the enumeration cap"
        )
    w_bits = params.window_slots
    n_types = (1 << w_bits) - 1
    base, t, d = params.top_slot_base, params.n_top_slots, params.d
    low_targets, top_sources = _child_slot_maps(params)

    m = np.arange(1 << t, dtype=np.int64)
    pop_m = _popcount(m)

    def pow_table(x: float) -> np.ndarray:
        # x**n with the 0**0 = 1 convention
        out = np.empty(t + 1)
        out[0] = 1.0
        for n in range(1, t + 1):
            out[n] = out[n - 1] * x
        return out

    rows_parts, cols_parts, data_parts = [], [], []
    for start in range(1, n_types + 1, chunk):
        a = np.arange(start, min(start + chunk, n_types + 1), dtype=np.int64)
        b = (a & 1).astype(bool)
        for i in range(d):
            det = np.zeros_like(a)
            for j, tgt in enumerate(low_targets[i]):
                det |= (a >> tgt & 1) << j
            abits = np.zeros_like(a)
            for u, src in enumerate(top_sources[i]):
                abits |= (a >> src & 1) << u
            for bval in (False, True):
                sel = b == bval
                if not sel.any():
                    continue
                c1 = p + q - p * q if bval else p  # slot parent occupied
                c0 = q if bval else 0.0  # slot parent vacant
                pw_c1, pw_1c1 = pow_table(c1), pow_table(1.0 - c1)
                pw_c0, pw_1c0 = pow_table(c0), pow_table(1.0 - c0)
                asel = abits[sel]
                pa = _popcount(asel)
                n1 = _popcount(m[None, :] & asel[:, None])
                n0 = pop_m[None, :] - n1
                probs = (
                    pw_c1[n1]
                    * pw_1c1[pa[:, None] - n1]
                    * pw_c0[n0]
                    * pw_1c0[(t - pa)[:, None] - n0]
                )
                cols = det[sel][:, None] | (m[None, :] << base)
                rows = np.broadcast_to(a[sel][:, None], cols.shape)
                keep = (cols > 0) & (probs > 0.0)
                rows_parts.append(rows[keep] - 1)
                cols_parts.append(cols[keep] - 1)
                data_parts.append(probs[keep])

    coo = sparse.coo_matrix(
        (
            np.concatenate(data_parts),
            (np.concatenate(rows_parts), np.concatenate(cols_parts)),
        ),
        shape=(n_types, n_types),
    )
    csr = coo.tocsr()
    csr.sum_duplicates()
    csr.sort_indices()
    return SparseOffspringMatrix(params, p, q, csr)


def chain_survival(
    params: TreeParams,
    p: float,
    q: float,
    depth: int,
    trials: int,
    rng: np.random.Generator,
    initial=None,
    batch: int = 20000,
):
    """Survival frequency of the cluster at a given depth, with binomial SE.

    "Alive at depth n" means the cluster holds a vertex with height in
    [n-k+1, n]; generation n-k+1 of the window chain covers exactly that slab,
    so the frequency is the fraction of trials whose chain population is
    nonzero there.  Trials run in batches to bound memory.
    """
    if depth < params.k:
        raise ParameterError(f"depth must be >= k={params.k}")
    generations = depth - params.k + 1
    alive = 0
    done = 0
    while done < trials:
        n = min(batch, trials - done)
        counts, _ = simulate_window_chain(
            params, p, q, rng, generations, trials=n, initial=initial
        )
        alive += int((counts[:, generations, :].sum(axis=1) > 0).sum())
        done += n
    freq = alive / trials
    return freq, float(np.sqrt(freq * (1.0 - freq) / trials))


def _transition_tables(params: TreeParams, p: float, q: float):
    """Per (window, child): outcome windows and their probabilities, as arrays.

    Outcome index 0 is always the empty window so extinction mass is explicit.
    """
    tables = {}
    for a in range(1, (1 << params.window_slots)):
        per_child = []
        for i in range(1, params.d + 1):
            pmf = child_window_dist(a, i, p, q, params)
            outcomes = np.array(sorted(pmf), dtype=np.int64)
            pvals = np.array([pmf[w] for w in outcomes])
            per_child.append((outcomes, pvals))
        tables[a] = per_child
    return tables


def simulate_window_chain(
    params: TreeParams,
    p: float,
    q: float,
    rng: np.random.Generator,
    generations: int,
    trials: int = 1,
    initial=None,
    population_cap: int = 10**8,
):
    """Simulate the window chain for many independent trials at once.

    Offspring are aggregated per type with multinomial draws, which is the
    exact law of summed i.i.d. child windows, so the cost per generation does
    not grow with the population size.

    Returns ``(counts, x)`` where ``counts`` has shape
    (trials, generations + 1, 2^W - 1) with per-type populations and ``x`` has
    shape (trials, generations + 1) with the number of individuals whose
    window contains the root, i.e. the height-layer occupation counts of the
    underlying cluster.

    ``initial`` may be a window bitmask (fixed initial type) or a pmf mapping
    windows to probabilities; default is the root-window law at parameter p.
    """
    if generations < 0:
        raise ParameterError("generations must be >= 0")
    n_types = (1 << params.window_slots) - 1
    tables = _transition_tables(params, p, q)

    counts = np.zeros((trials, generations + 1, n_types), dtype=np.int64)
    if initial is None:
        initial = initial_window_dist(params, p)
    if isinstance(initial, int):
        counts[:, 0, initial - 1] = 1
    else:
        support = np.array(sorted(initial), dtype=np.int64)
        pvals = np.array([initial[w] for w in support])
        pvals = pvals / pvals.sum()
        drawn = support[rng.choice(len(support), size=trials, p=pvals)]
        for w in np.unique(drawn):
            counts[drawn == w, 0, w - 1] = 1

    for gen in range(generations):
        cur = counts[:, gen, :]
        nxt = counts[:, gen + 1, :]
        for a in np.flatnonzero(cur.any(axis=0)) + 1:
            n_parents = cur[:, a - 1]
            for outcomes, pvals in tables[a]:
                draws = rng.multinomial(n_parents, pvals)
                live = outcomes > 0
                nxt[:, outcomes[live] - 1] += draws[:, live]
        total = int(nxt.sum())
        if total > population_cap:
            raise SizeCapError(
                f"population {total} exceeds cap {population_cap} at generation {gen + 1}"
            )

    root_mask = np.array(
        [1 if (w & 1) else 0 for w in range(1, n_types + 1)], dtype=np.int64
    )
    x = counts @ root_mask
    return counts, x
