"""Monte Carlo exploration of the percolation cluster.

Two exploration styles are provided on top of the lazy edge oracle:

* a height-layered sweep (``explore_layers``) that records the occupation
  count of each layer, and
* the two-stage short-cluster / long-boundary sweep whose boundary pieces,
  grouped by subtree proximity, reproduce the cluster as a branching process
  over admissible-set shapes (``simulate_z_first``).

Closed-form expectations for the long-boundary count and the two-point short
cluster are included for cross-checking the samplers.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import ConsistencyError, ParameterError, SizeCapError
from .rng import EdgeOracle
from .tree import ROOT, TreeParams, slot_index, window_height, window_size

DEFAULT_CLUSTER_CAP = 10**7


@dataclass(frozen=True)
class PercParams:
    """Short- and long-edge open probabilities."""

    p: float
    q: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ParameterError(f"probabilities must lie in [0, 1]: {self}")


@dataclass
class LayerStats:
    """Per-height occupation counts of the explored cluster."""

    x: list[int]
    truncated_alive: bool


@dataclass(frozen=True)
class AdmissibleSet:
    """A boundary piece: its base vertex and shape relative to the base.

    ``rel_type`` is a window bitmask over the base's slab; the slot-0 bit is
    always set since the base belongs to the set.
    """

    base: tuple
    rel_type: int

    def __post_init__(self):
        if not self.rel_type & 1:
            raise ConsistencyError("an admissible set must contain its own base")

    @property
    def size(self) -> int:
        return window_size(self.rel_type)


def make_oracle(params: TreeParams, perc: PercParams, seed: int, trial: int = 0) -> EdgeOracle:
    return EdgeOracle(params, perc.p, perc.q, seed, trial)


def explore_layers(
    params: TreeParams, perc: PercParams, oracle: EdgeOracle, n_max: int
) -> LayerStats:
    """Reveal the cluster one height layer at a time.

    A vertex of height n is in the cluster iff its parent is and the short
    edge between them is open, or n >= k and its k-th ancestor is and the
    long edge is open.
    """
    if n_max < 0:
        raise ParameterError("n_max must be >= 0")
    k = params.k
    layers: list[set] = [{ROOT}]
    for n in range(1, n_max + 1):
        layer: set = set()
        for u in layers[n - 1]:
            for j in oracle.open_short_children(u):
                layer.add(u + (j,))
        if n >= k:
            for u in layers[n - k]:
                for s in oracle.open_long_children(u):
                    layer.add(u + s)
        layers.append(layer)
    alive = any(layers[n] for n in range(max(0, n_max - k + 1), n_max + 1))
    return LayerStats(x=[len(layer) for layer in layers], truncated_alive=alive)


def short_cluster(
    vertices, oracle: EdgeOracle, cap: int = DEFAULT_CLUSTER_CAP
) -> set:
    """Closure of a vertex set under open short edges."""
    if not vertices:
        raise ParameterError("short_cluster needs a nonempty starting set")
    cluster = set(vertices)
    frontier = list(cluster)
    while frontier:
        u = frontier.pop()
        for j in oracle.open_short_children(u):
            v = u + (j,)
            if v not in cluster:
                cluster.add(v)
                frontier.append(v)
                if len(cluster) > cap:
                    raise SizeCapError(
                        f"short cluster exceeded cap of {cap} vertices"
                    )
    return cluster


def long_boundary(cluster: set, oracle: EdgeOracle) -> set:
    """Endpoints of open long edges leaving a short cluster."""
    out = set()
    for u in cluster:
        for s in oracle.open_long_children(u):
            v = u + s
            if v not in cluster:
                out.add(v)
    return out


def decompose(boundary: set, params: TreeParams) -> list[AdmissibleSet]:
    """Split a long boundary into admissible sets.

    Two boundary vertices are grouped when one is a strict prefix of the
    other fewer than k levels up (union-find closure of that relation); each
    group's base is its unique shortest member.
    """
    if not boundary:
        return []
    members = sorted(boundary, key=len)
    parent_idx = list(range(len(members)))

    def find(i):
        while parent_idx[i] != i:
            parent_idx[i] = parent_idx[parent_idx[i]]
            i = parent_idx[i]
        return i

    for i, u in enumerate(members):
        for j in range(i):
            w = members[j]
            if len(w) < len(u) and u[: len(w)] == w:
                if len(u) - len(w) >= params.k:
                    raise ConsistencyError(
                        f"boundary vertices {w} and {u} are {len(u) - len(w)} "
                        f">= k={params.k} levels apart in the same subtree"
                    )
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent_idx[ri] = rj
    groups: dict[int, list] = {}
    for i in range(len(members)):
        groups.setdefault(find(i), []).append(members[i])
    out = []
    for group in groups.values():
        base = min(group, key=len)
        bits = 0
        for m in group:
            rel = m[len(base):]
            if m[: len(base)] != base or len(rel) >= params.k:
                raise ConsistencyError(
                    f"vertex {m} does not lie in the slab of base {base}"
                )
            bits |= 1 << slot_index(rel, params)
        out.append(AdmissibleSet(base=base, rel_type=bits))
    return sorted(out, key=lambda b: b.base)


def expand_admissible(
    b: AdmissibleSet,
    oracle: EdgeOracle,
    params: TreeParams,
    cap: int = DEFAULT_CLUSTER_CAP,
):
    """One two-stage step: short cluster, then long boundary, then grouping."""
    from .tree import window_vertices

    vertices = {b.base + rel for rel in window_vertices(b.rel_type, params)}
    cs = short_cluster(vertices, oracle, cap=cap)
    cl = long_boundary(cs, oracle)
    return cs, cl, decompose(cl, params)


def simulate_z_first(
    initial: AdmissibleSet,
    oracle: EdgeOracle,
    params: TreeParams,
    generations: int,
    cap: int = DEFAULT_CLUSTER_CAP,
    keep_sets: bool = False,
):
    """Run the admissible-set branching exploration for a fixed horizon.

    Returns a list of per-generation type counts (Counter over window
    bitmasks).  With ``keep_sets`` the admissible sets and short clusters of
    every generation are returned as well, which allows pathwise comparison
    against a direct exploration of the same realization.
    """
    if generations < 0:
        raise ParameterError("generations must be >= 0")
    gen_sets = [[initial]]
    short_clusters = []
    for _ in range(generations):
        nxt = []
        stage_clusters = []
        for b in gen_sets[-1]:
            cs, _cl, pieces = expand_admissible(b, oracle, params, cap=cap)
            stage_clusters.append(cs)
            nxt.extend(pieces)
        short_clusters.append(stage_clusters)
        gen_sets.append(nxt)
    pops = [Counter(b.rel_type for b in gen) for gen in gen_sets]
    if keep_sets:
        # short clusters of the final generation complete the disjoint union
        short_clusters.append(
            [expand_admissible(b, oracle, params, cap=cap)[0] for b in gen_sets[-1]]
        )
        return pops, gen_sets, short_clusters
    return pops


def explore_full_cluster(
    vertices, oracle: EdgeOracle, cap: int = DEFAULT_CLUSTER_CAP
) -> set:
    """All vertices reachable from a set through open edges of either kind."""
    cluster = set(vertices)
    frontier = list(cluster)
    while frontier:
        u = frontier.pop()
        children = [u + (j,) for j in oracle.open_short_children(u)]
        children += [u + s for s in oracle.open_long_children(u)]
        for v in children:
            if v not in cluster:
                cluster.add(v)
                frontier.append(v)
                if len(cluster) > cap:
                    raise SizeCapError(f"cluster exceeded cap of {cap} vertices")
    return cluster


def estimate_survival(
    params: TreeParams,
    perc: PercParams,
    trials: int,
    depth: int,
    seed: int,
    escape_population: int | None = 1000,
):
    """Fraction of explorations still alive at the given depth, with SE.

    "Alive at depth n" means some vertex with height in [n-k+1, n] belongs to
    the cluster; long edges can jump over empty layers, so a single empty
    layer does not imply death.  When the number of vertices in the k most
    recent layers reaches ``escape_population`` the trial is declared alive
    without exploring further: with that many independent subtrees open the
    probability of all of them dying before the horizon is negligible
    (bounded by (1 - zeta)^escape for per-vertex survival probability zeta).
    Pass ``escape_population=None`` for the exact proxy.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if depth < params.k:
        raise ParameterError(f"depth must be >= k={params.k}")
    k = params.k
    alive_count = 0
    for trial in range(trials):
        oracle = make_oracle(params, perc, seed, trial)
        window = [set() for _ in range(k)]
        window[0].add(ROOT)
        alive = True
        for n in range(1, depth + 1):
            layer: set = set()
            for u in window[(n - 1) % k]:
                for j in oracle.open_short_children(u):
                    layer.add(u + (j,))
            if n >= k:
                for u in window[n % k]:  # the height n-k layer, about to be evicted
                    for s in oracle.open_long_children(u):
                        layer.add(u + s)
            window[n % k] = layer
            population = sum(len(s) for s in window)
            if population == 0:
                alive = False
                break
            if escape_population is not None and population >= escape_population:
                break
        if alive:
            alive_count += 1
    freq = alive_count / trials
    se = math.sqrt(freq * (1.0 - freq) / trials)
    return freq, se


def exact_long_boundary_mean(a_bits: int, perc: PercParams, params: TreeParams) -> float:
    """Expected number of open-long-edge endpoints below an admissible set of
    shape ``a_bits``, counted with the containment (not equality) convention:
    (1 - p^(k - h)) * d^k * q^|A| * p^h / (1 - p d)."""
    if a_bits <= 0 or not a_bits & 1:
        raise ParameterError("shape must be nonempty and contain its base")
    p, q = perc.p, perc.q
    if p * params.d >= 1.0:
        raise ParameterError("formula requires p d < 1")
    h = window_height(a_bits, params)
    size = window_size(a_bits)
    return (
        (1.0 - p ** (params.k - h))
        * params.d**params.k
        * q**size
        * p**h
        / (1.0 - p * params.d)
    )


def exact_mean_short_cluster_pair(a_bits: int, perc: PercParams, params: TreeParams) -> float:
    """Expected short-cluster size of a two-vertex admissible set:
    (2 - p^h) / (1 - p d)."""
    if window_size(a_bits) != 2:
        raise ParameterError("shape must have exactly two vertices")
    p = perc.p
    if p * params.d >= 1.0:
        raise ParameterError("formula requires p d < 1")
    h = window_height(a_bits, params)
    return (2.0 - p**h) / (1.0 - p * params.d)


def criteria_eval(params: TreeParams, p: float, s: float, trials: int, seed: int):
    """Monte Carlo estimates of the two survival/extinction criteria of the
    admissible-set chain at q = (1 - p d)/d^k + s/d^2k.

    Returns ((lhs_a, se_a), (lhs_b, se_b), q) where

    * lhs_a estimates M(o,o) + sum over |B| = 2 of M(o,B) M(B,o), via the
      count of root-type children of the root plus root-type grandchildren
      through size-2 first-generation pieces, and
    * lhs_b estimates the lambda-weighted extinction functional: sizes of
      first-generation pieces with size != 2 plus sizes of the offspring of
      the size-2 pieces.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    dk = float(params.d) ** params.k
    q = (1.0 - p * params.d) / dk + s / dk**2
    if not 0.0 <= q <= 1.0:
        raise ParameterError(f"parametrized q={q} outside [0, 1]")
    perc = PercParams(p=p, q=q)
    sum_a = sum_a2 = 0.0
    sum_b = sum_b2 = 0.0
    root_set = AdmissibleSet(base=ROOT, rel_type=1)
    for trial in range(trials):
        oracle = make_oracle(params, perc, seed, trial)
        _cs, _cl, gen1 = expand_admissible(root_set, oracle, params)
        acc_a = 0.0
        acc_b = 0.0
        for piece in gen1:
            if piece.rel_type == 1:
                acc_a += 1.0
            if piece.size != 2:
                acc_b += piece.size
            else:
                _, _, children = expand_admissible(piece, oracle, params)
                for child in children:
                    if child.rel_type == 1:
                        acc_a += 1.0
                    acc_b += child.size
        sum_a += acc_a
        sum_a2 += acc_a * acc_a
        sum_b += acc_b
        sum_b2 += acc_b * acc_b
    mean_a = sum_a / trials
    mean_b = sum_b / trials
    se_a = math.sqrt(max(sum_a2 / trials - mean_a**2, 0.0) / trials)
    se_b = math.sqrt(max(sum_b2 / trials - mean_b**2, 0.0) / trials)
    return (mean_a, se_a), (mean_b, se_b), q
