"""Generic multi-type branching process engine.

Populations are plain dicts mapping hashable types to nonnegative counts;
the empty dict is the absorbing extinct state.  An :class:`OffspringLaw`
couples a per-type sampler with an optional exact pmf, and the two proof
transformations implemented here rewrite a law without changing its survival
event: ``collapse_I`` replaces individuals of designated types by their own
offspring until none remain, and ``lambda_collapse`` projects onto a
single-type process by weighted child counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import networkx as nx

from .errors import ConsistencyError, ParameterError, SizeCapError
from .rng import derive_trial_seed

#: Exact pmfs are dropped (sampler kept) past this many outcomes.
PMF_SUPPORT_CAP = 10**4
#: Residual mass tolerated when an exact collapsed pmf is truncated.
PMF_RESIDUAL_TOL = 1e-13

Population = dict


def pop_key(pop: Population) -> tuple:
    """Canonical hashable form of a population (zero counts dropped)."""
    return tuple(sorted((t, c) for t, c in pop.items() if c))


def pop_from_key(key: tuple) -> Population:
    return dict(key)


@dataclass
class OffspringLaw:
    """Offspring distribution of a multi-type branching process.

    ``sample(type, rng)`` returns one offspring population.  ``pmf``, when
    present, maps each type to a dict {population key: probability} and is the
    exact law of the sampler.
    """

    types: tuple
    sample: Callable
    pmf: dict | None = None

    def __post_init__(self):
        if self.pmf is not None:
            for a, dist in self.pmf.items():
                mass = sum(dist.values())
                if abs(mass - 1.0) > 1e-12:
                    raise ConsistencyError(
                        f"pmf of type {a!r} sums to {mass}, not 1"
                    )
                if any(p < 0 for p in dist.values()):
                    raise ConsistencyError(f"negative pmf mass for type {a!r}")

    @classmethod
    def from_pmf(cls, pmf: dict) -> "OffspringLaw":
        """Law defined by exact per-type pmfs; the sampler is derived."""

        tables = {
            a: (list(dist.keys()), list(dist.values())) for a, dist in pmf.items()
        }

        def sample(a, rng):
            keys, weights = tables[a]
            u = rng.random()
            acc = 0.0
            for key, w in zip(keys, weights):
                acc += w
                if u < acc:
                    return pop_from_key(key)
            return pop_from_key(keys[-1])

        return cls(types=tuple(pmf), sample=sample, pmf=dict(pmf))

    def mean_matrix(self) -> dict:
        """Mean offspring counts {parent type: {child type: mean}}; exact pmf
        required."""
        if self.pmf is None:
            raise ParameterError("mean_matrix needs an exact pmf")
        out = {}
        for a, dist in self.pmf.items():
            row: dict = {}
            for key, pr in dist.items():
                for b, c in key:
                    row[b] = row.get(b, 0.0) + pr * c
            out[a] = row
        return out


def step(pop: Population, law: OffspringLaw, rng) -> Population:
    """One generation: independent offspring per individual, summed."""
    nxt: Population = {}
    for a, count in pop.items():
        if count < 0:
            raise ParameterError(f"negative count for type {a!r}")
        for _ in range(count):
            for b, c in law.sample(a, rng).items():
                if c:
                    nxt[b] = nxt.get(b, 0) + c
    return nxt


def survival_mc(
    law: OffspringLaw,
    initial: Population,
    trials: int,
    generations: int,
    rng_factory,
    escape_population: int | None = None,
    population_cap: int = 10**6,
):
    """Fraction of runs with a nonzero population at the horizon, with SE.

    ``rng_factory(trial)`` must return an independent random stream per trial.
    With ``escape_population`` set, a run whose population reaches that size
    is declared alive without simulating further generations.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    alive = 0
    for trial in range(trials):
        rng = rng_factory(trial)
        pop = dict(initial)
        for _ in range(generations):
            size = sum(pop.values())
            if size == 0:
                break
            if escape_population is not None and size >= escape_population:
                break
            if size > population_cap:
                raise SizeCapError(f"population {size} exceeds cap {population_cap}")
            pop = step(pop, law, rng)
        if sum(pop.values()) > 0:
            alive += 1
    freq = alive / trials
    return freq, math.sqrt(freq * (1.0 - freq) / trials)


def seeded_rng_factory(master_seed: int):
    """Per-trial independent ``random.Random`` streams from one master seed."""
    import random

    return lambda trial: random.Random(derive_trial_seed(master_seed, trial))


def collapse_I(
    law: OffspringLaw, I, max_rounds: int = 1000, replacement_cap: int = 10**5
) -> OffspringLaw:
    """Law of the process watched on types outside I.

    Offspring of types in I are replaced by their own offspring, repeatedly,
    until none remain; survival of the watched process coincides with
    survival of the original whenever the I-restricted subprocess dies out.
    The exact pmf is propagated by iterated convolution when the support
    stays below the cap and the unresolved mass drains below tolerance;
    otherwise only the sampler survives the transformation.
    """
    I = frozenset(I)
    if not I:
        return law
    kept = tuple(a for a in law.types if a not in I)
    if not kept:
        raise ParameterError("collapse_I needs at least one retained type")

    def sample(a, rng):
        if a in I:
            raise ParameterError(f"type {a!r} was collapsed away")
        pop = law.sample(a, rng)
        for _ in range(max_rounds):
            pending = [b for b, c in pop.items() if b in I and c]
            if not pending:
                return pop
            if sum(pop[b] for b in pending) > replacement_cap:
                break
            nxt = {b: c for b, c in pop.items() if b not in I}
            for b in pending:
                for _ in range(pop[b]):
                    for t, c in law.sample(b, rng).items():
                        if c:
                            nxt[t] = nxt.get(t, 0) + c
            pop = nxt
        raise SizeCapError(
            f"collapse of types {sorted(map(repr, I))} did not terminate "
            f"within the round and population caps; the hidden subprocess "
            "may be supercritical"
        )

    pmf = None
    if law.pmf is not None:
        pmf = _collapse_pmf(law.pmf, I, kept, max_rounds)
    return OffspringLaw(types=kept, sample=sample, pmf=pmf)


def _collapse_pmf(pmf: dict, I: frozenset, kept: tuple, max_rounds: int):
    """Exact pmf of the collapsed law, or None when caps are exceeded."""
    out = {}
    for a in kept:
        dist = dict(pmf[a])
        for _ in range(max_rounds):
            pending = {
                key: pr
                for key, pr in dist.items()
                if any(b in I for b, _ in key)
            }
            if sum(pending.values()) <= PMF_RESIDUAL_TOL:
                resolved = {
                    key: pr for key, pr in dist.items() if key not in pending
                }
                mass = sum(resolved.values())
                if mass <= 0:
                    return None
                out[a] = {key: pr / mass for key, pr in resolved.items()}
                break
            nxt: dict = {}
            for key, pr in dist.items():
                if key not in pending:
                    nxt[key] = nxt.get(key, 0.0) + pr
                    continue
                # replace one I-individual of the first I-type in the key
                b = next(t for t, _ in key if t in I)
                base = dict(key)
                base[b] -= 1
                if not base[b]:
                    del base[b]
                for off_key, off_pr in pmf[b].items():
                    merged = dict(base)
                    for t, c in off_key:
                        merged[t] = merged.get(t, 0) + c
                    mk = pop_key(merged)
                    nxt[mk] = nxt.get(mk, 0.0) + pr * off_pr
            if len(nxt) > PMF_SUPPORT_CAP:
                return None
            dist = nxt
        else:
            return None
    return out


def lambda_collapse(law: OffspringLaw, a_star, lam) -> OffspringLaw:
    """Single-type law counting the lambda-weighted offspring of ``a_star``.

    ``lam`` maps types to positive integer weights with lam(a_star) = 1.
    """
    weight = lam if callable(lam) else lam.__getitem__
    if weight(a_star) != 1:
        raise ParameterError("lambda weight of the root type must be 1")

    def sample(a, rng):
        if a != a_star:
            raise ParameterError(f"single-type law only knows {a_star!r}")
        total = 0
        for b, c in law.sample(a_star, rng).items():
            w = weight(b)
            if w < 1:
                raise ParameterError(f"lambda weight of {b!r} must be >= 1")
            total += w * c
        return {a_star: total} if total else {}

    pmf = None
    if law.pmf is not None:
        dist: dict = {}
        for key, pr in law.pmf[a_star].items():
            total = sum(weight(b) * c for b, c in key)
            out_key = ((a_star, total),) if total else ()
            dist[out_key] = dist.get(out_key, 0.0) + pr
        pmf = {a_star: dist}
    return OffspringLaw(types=(a_star,), sample=sample, pmf=pmf)


def criteria(M, a_star, I, lam):
    """Survival and extinction functionals of a mean matrix around one type.

    Returns (lhs_a, lhs_b):

    * lhs_a = M(a*, a*) + sum over a in I of M(a*, a) M(a, a*), whose excess
      over 1 witnesses survival, and
    * lhs_b = sum over a not in I of M(a*, a) lam(a) plus, for a in I, the
      lam-weighted mass of their offspring rows, whose deficit below 1
      witnesses extinction.
    """
    if hasattr(M, "to_mapping"):
        M = M.to_mapping()
    I = frozenset(I)
    if a_star in I:
        raise ParameterError("the root type must not be collapsed")
    weight = lam if callable(lam) else lam.__getitem__
    row = M.get(a_star, {})
    lhs_a = row.get(a_star, 0.0)
    lhs_b = 0.0
    for a, rate in row.items():
        if a in I:
            lhs_a += rate * M.get(a, {}).get(a_star, 0.0)
            lhs_b += rate * sum(
                r2 * weight(b) for b, r2 in M.get(a, {}).items()
            )
        else:
            lhs_b += rate * weight(a)
    return lhs_a, lhs_b


def _neighborhood_hash(cluster: set, edges, radius: int) -> str:
    """Canonical label of the rooted radius-m ball of the cluster graph.

    Edges are undirected for the metric.  Rooted-graph classes are separated
    by a Weisfeiler-Lehman hash seeded with distance-from-root labels, which
    distinguishes every pair arising at radius <= 2 on these graphs.
    """
    g = nx.Graph()
    g.add_nodes_from(cluster)
    g.add_edges_from(edges)
    dists = nx.single_source_shortest_path_length(g, (), cutoff=radius)
    ball = g.subgraph(dists).copy()
    nx.set_node_attributes(ball, dists, "dist")
    return nx.weisfeiler_lehman_graph_hash(ball, node_attr="dist", iterations=4)


def conditioned_cluster_sample(
    params,
    perc,
    size_threshold: int,
    radius: int,
    trials_budget: int,
    seed: int,
    min_acceptance: float = 1e-5,
):
    """Empirical law of the root's neighborhood in clusters larger than n.

    Rejection sampling: clusters are explored breadth-first and a trial is
    accepted once more than ``size_threshold`` vertices are found (critical
    clusters are a.s. finite, so rejected trials terminate).  The returned
    pmf is over isomorphism classes of the rooted radius-``radius`` ball of
    the cluster graph, both edge kinds undirected.  Raises when the budget is
    spent with acceptance below ``min_acceptance``.
    """
    from .percolation import make_oracle

    if radius > 2:
        raise ParameterError("neighborhood radius is limited to 2")
    if trials_budget < 1:
        raise ParameterError("trials_budget must be >= 1")
    # membership of a vertex depends only on edges above it, so the ball is
    # determined by the cluster restricted to this many levels
    local_height = radius * params.k
    accepted: dict[str, int] = {}
    n_accepted = 0
    for trial in range(trials_budget):
        oracle = make_oracle(params, perc, seed, trial)
        cluster = {()}
        frontier = [()]
        while frontier and len(cluster) <= size_threshold:
            u = frontier.pop()
            children = [u + (j,) for j in oracle.open_short_children(u)]
            children += [u + s for s in oracle.open_long_children(u)]
            for v in children:
                if v not in cluster:
                    cluster.add(v)
                    frontier.append(v)
        if len(cluster) <= size_threshold:
            continue
        n_accepted += 1
        # the early stop above may leave shallow vertices unexplored, so the
        # ball is recomputed by a complete height-restricted sweep
        local = {()}
        stack = [()]
        while stack:
            u = stack.pop()
            children = [u + (j,) for j in oracle.open_short_children(u)]
            children += [u + s for s in oracle.open_long_children(u)]
            for v in children:
                if len(v) <= local_height and v not in local:
                    local.add(v)
                    stack.append(v)
        edges = []
        for u in local:
            for j in oracle.open_short_children(u):
                v = u + (j,)
                if v in local:
                    edges.append((u, v))
            for s in oracle.open_long_children(u):
                v = u + s
                if v in local:
                    edges.append((u, v))
        label = _neighborhood_hash(local, edges, radius)
        accepted[label] = accepted.get(label, 0) + 1
    rate = n_accepted / trials_budget
    if n_accepted == 0 or rate < min_acceptance:
        raise SizeCapError(
            f"acceptance rate {rate:.2e} below {min_acceptance} after "
            f"{trials_budget} trials"
        )
    pmf = {label: c / n_accepted for label, c in sorted(accepted.items())}
    return pmf, rate
