"""Slab comparison between the two-range tree and its unconstrained cover.

The cover is the (d + d^k)-ary tree: every vertex points to d "short" and
d^k "long" children, so its cluster is the family tree of the branching
process with offspring Bin(d, p) + Bin(d^k, q).  A digit substitution map
sends cover vertices onto tree vertices, short digits to single digits and
long digits to k-digit blocks.  Finite slabs on both sides are cut at image
height 2k, with leaves at image heights [2k, 3k).

This module provides the substitution map, lazy slab configurations, leaf
counts Z and Z-hat, the conflict-aware simultaneous exploration whose output
satisfies Z <= Z-hat pathwise, the distinguished configuration driving the
strict inequality, a generic pivot coupling for finite distributions, and an
empirical stochastic-dominance test.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass

from .errors import FeasibilityError, ParameterError
from .rng import EdgeOracle, derive_trial_seed
from .tree import TreeParams, long_selector, long_selector_index


class PhiMap:
    """Digit substitution from the (d + d^k)-ary tree onto the two-range tree.

    Digit j <= d maps to the single digit (j); digit d + m maps to the m-th
    element of [d]^k in lexicographic order.  The induced vertex map is
    blockwise concatenation, so short cover edges land on short edges and
    long cover edges on long edges.
    """

    def __init__(self, params: TreeParams):
        self.params = params
        self.n_digits = params.d + params.n_long_children

    def is_long_digit(self, j: int) -> bool:
        if not 1 <= j <= self.n_digits:
            raise ParameterError(f"digit {j} outside [1, {self.n_digits}]")
        return j > self.params.d

    def phi(self, j: int) -> tuple:
        """Image block of one cover digit."""
        if self.is_long_digit(j):
            return long_selector(j - self.params.d - 1, self.params)
        return (j,)

    def phi_inv(self, block: tuple) -> int:
        """Cover digit of a single digit or a k-digit block."""
        if len(block) == 1:
            j = block[0]
            if not 1 <= j <= self.params.d:
                raise ParameterError(f"digit {j} outside [1, {self.params.d}]")
            return j
        if len(block) == self.params.k:
            return self.params.d + 1 + long_selector_index(block, self.params)
        raise ParameterError(f"block length must be 1 or k, got {len(block)}")

    def map(self, vhat: tuple) -> tuple:
        out: tuple = ()
        for j in vhat:
            out += self.phi(j)
        return out

    def image_height(self, vhat: tuple) -> int:
        """Height of the image: short digits weigh 1, long digits weigh k."""
        k, d = self.params.k, self.params.d
        return sum(k if j > d else 1 for j in vhat)


def leaf_band(params: TreeParams) -> tuple[int, int]:
    """Half-open height band [2k, 3k) of the slab leaves."""
    return 2 * params.k, 3 * params.k


def n_slab_leaves(params: TreeParams) -> int:
    """Number of leaves of the two-range slab: sum of d^h over the band."""
    lo, hi = leaf_band(params)
    return sum(params.d**h for h in range(lo, hi))


class HatConfig:
    """Edge configuration on the cover slab, materialized lazily.

    Out-edges of a tail are drawn in one batch from a per-tail keyed stream
    (independent across tails, reproducible across query orders), or supplied
    by a deterministic rule.
    """

    def __init__(self, params: TreeParams, rule=None, p=None, q=None, seed=None, trial=0):
        self.params = params
        self.phi_map = PhiMap(params)
        self._rule = rule
        self._memo: dict[tuple, tuple] = {}
        if rule is None:
            if p is None or q is None or seed is None:
                raise ParameterError("random configs need p, q and a seed")
            if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
                raise ParameterError(f"probabilities outside [0, 1]: p={p}, q={q}")
            self.p, self.q = p, q
            s = derive_trial_seed(seed, trial) if trial else seed % (1 << 64)
            self._key = s.to_bytes(8, "little")

    @classmethod
    def random(cls, params: TreeParams, p: float, q: float, seed: int, trial: int = 0):
        return cls(params, p=p, q=q, seed=seed, trial=trial)

    @classmethod
    def from_rule(cls, params: TreeParams, rule):
        """``rule(tail, digit) -> bool`` decides every edge deterministically."""
        return cls(params, rule=rule)

    def open_digits(self, vhat: tuple) -> tuple:
        """Sorted open out-digits of a tail (no slab membership check here)."""
        hit = self._memo.get(vhat)
        if hit is not None:
            return hit
        d, n = self.params.d, self.phi_map.n_digits
        if self._rule is not None:
            out = tuple(j for j in range(1, n + 1) if self._rule(vhat, j))
        else:
            digest = hashlib.blake2b(bytes(vhat), digest_size=8, key=self._key).digest()
            rng = random.Random(int.from_bytes(digest, "little"))
            out = tuple(
                j
                for j in range(1, n + 1)
                if rng.random() < (self.p if j <= d else self.q)
            )
        self._memo[vhat] = out
        return out

    def is_open(self, vhat: tuple, digit: int) -> bool:
        return digit in self.open_digits(vhat)


def omega_bar(params: TreeParams) -> HatConfig:
    """The distinguished configuration: all root edges open, subtrees under
    long root children fully open, subtrees under short root children open
    only on short edges whose head has cover height at most k."""
    d, k = params.d, params.k

    def rule(vhat: tuple, digit: int) -> bool:
        if not vhat:
            return True
        if vhat[0] > d:
            return True
        return digit <= d and len(vhat) + 1 <= k

    return HatConfig.from_rule(params, rule)


def leaf_count_Z(params: TreeParams, oracle: EdgeOracle) -> int:
    """Leaves of the two-range slab reachable from the root by open paths.

    Only edges whose tail has height below 2k exist in the slab, so every
    vertex at heights [2k, 3k) is terminal.
    """
    lo, hi = leaf_band(params)
    seen = {()}
    stack = [()]
    leaves = 0
    while stack:
        u = stack.pop()
        if len(u) >= lo:
            leaves += 1
            continue
        children = [u + (j,) for j in oracle.open_short_children(u)]
        children += [u + s for s in oracle.open_long_children(u)]
        for v in children:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return leaves


def leaf_count_Zhat(params: TreeParams, config: HatConfig) -> int:
    """Leaves of the cover slab reachable from its root under a configuration.

    Cover leaves are vertices whose image height falls in [2k, 3k); tails
    with image height below 2k carry the slab's edges.
    """
    lo, _hi = leaf_band(params)
    seen = {()}
    stack = [((), 0)]
    leaves = 0
    d, k = params.d, params.k
    while stack:
        u, w = stack.pop()
        if w >= lo:
            leaves += 1
            continue
        for j in config.open_digits(u):
            v = u + (j,)
            if v not in seen:
                seen.add(v)
                stack.append((v, w + (k if j > d else 1)))
    return leaves


@dataclass
class HatExploration:
    """Outcome of the simultaneous conflict-aware exploration."""

    vertices: set  # constructed subgraph of the two-range slab
    edges: set  # (tail, head) pairs, both edge kinds
    hat_explored: set  # cover vertices visited without conflict
    conflicts: set  # cover vertices whose image was already present

    def leaf_count(self, params: TreeParams) -> int:
        lo, hi = leaf_band(params)
        return sum(1 for v in self.vertices if lo <= len(v) < hi)


def explore_hat_to_C(params: TreeParams, config: HatConfig) -> HatExploration:
    """Build a two-range subgraph from a cover configuration.

    Alternating rounds: short closure from the root, a long round from
    everything explored, a short closure from the long round's additions, and
    a final long round.  A cover vertex whose image is already present is a
    conflict: its edge is added but its subtree is never explored.  The
    construction leaves the cover cluster's law intact on the explored part
    while its image never double-counts a slab vertex, which forces the leaf
    count of the image to be at most the cover cluster's.
    """
    phi_map = config.phi_map
    d, k = params.d, params.k
    cut = 2 * params.k
    c_vertices = {()}
    c_edges: set = set()
    hat_explored = {()}
    conflicts: set = set()
    # cover vertices carried as (path, image height, image vertex)
    root = ((), 0, ())

    def short_closure(frontier):
        added = []
        stack = list(frontier)
        while stack:
            u, w, img = stack.pop()
            if w >= cut:
                continue
            for j in config.open_digits(u):
                if j > d:
                    continue
                v = u + (j,)
                if v in hat_explored or v in conflicts:
                    continue
                head_img = img + (j,)
                c_edges.add((img, head_img))
                if head_img in c_vertices:
                    conflicts.add(v)
                    continue
                c_vertices.add(head_img)
                hat_explored.add(v)
                node = (v, w + 1, head_img)
                added.append(node)
                stack.append(node)
        return added

    def long_round(frontier):
        added = []
        stack = list(frontier)
        while stack:
            u, w, img = stack.pop()
            if w >= cut:
                continue
            for j in config.open_digits(u):
                if j <= d:
                    continue
                v = u + (j,)
                if v in hat_explored or v in conflicts:
                    continue
                head_img = img + phi_map.phi(j)
                c_edges.add((img, head_img))
                if head_img in c_vertices:
                    conflicts.add(v)
                    continue
                c_vertices.add(head_img)
                hat_explored.add(v)
                node = (v, w + k, head_img)
                added.append(node)
                stack.append(node)
        return added

    step1 = short_closure([root])
    step2 = long_round([root] + step1)
    step3 = short_closure(step2)
    long_round(step3)
    return HatExploration(
        vertices=c_vertices,
        edges=c_edges,
        hat_explored=hat_explored,
        conflicts=conflicts,
    )


@dataclass
class CouplingTable:
    """Joint law J of (X, Y) with X ~ P1, Y ~ P2, supported on agreement or
    on either coordinate hitting the pivot."""

    outcomes: tuple
    pivot: object
    joint: dict  # (x, y) -> probability
    p1: dict
    p2: dict

    def marginal_errors(self) -> tuple[float, float]:
        """Sup-norm mismatch of the joint's row and column sums."""
        row = {x: 0.0 for x in self.outcomes}
        col = {y: 0.0 for y in self.outcomes}
        for (x, y), pr in self.joint.items():
            row[x] += pr
            col[y] += pr
        e1 = max(abs(row[x] - self.p1.get(x, 0.0)) for x in self.outcomes)
        e2 = max(abs(col[y] - self.p2.get(y, 0.0)) for y in self.outcomes)
        return e1, e2

    def off_support_mass(self) -> float:
        return sum(
            pr
            for (x, y), pr in self.joint.items()
            if x != y and x != self.pivot and y != self.pivot
        )


def finite_coupling(p1: dict, p2: dict, pivot) -> CouplingTable:
    """Couple two finite distributions so they differ only through the pivot.

    Requires the total variation-style condition sum |P1 - P2| < P1(pivot);
    the overlap min(P1, P2) is kept diagonal, the excess of P1 is routed to
    Y = pivot and the excess of P2 to X = pivot.
    """
    outcomes = tuple(sorted(set(p1) | set(p2), key=repr))
    if pivot not in p1 or p1[pivot] <= 0.0:
        raise FeasibilityError("the pivot must carry positive P1 mass")
    for dist, name in ((p1, "P1"), (p2, "P2")):
        mass = sum(dist.values())
        if abs(mass - 1.0) > 1e-9 or any(v < 0 for v in dist.values()):
            raise ParameterError(f"{name} is not a distribution (mass {mass})")
    l1 = sum(abs(p1.get(x, 0.0) - p2.get(x, 0.0)) for x in outcomes)
    if l1 >= p1[pivot]:
        raise FeasibilityError(
            f"sum |P1 - P2| = {l1} is not below P1(pivot) = {p1[pivot]}"
        )
    joint: dict = {}
    excess1 = 0.0
    for x in outcomes:
        m = min(p1.get(x, 0.0), p2.get(x, 0.0))
        e1 = p1.get(x, 0.0) - m
        e2 = p2.get(x, 0.0) - m
        excess1 += e1
        if x == pivot:
            continue
        if m > 0:
            joint[(x, x)] = m
        if e1 > 0:
            joint[(x, pivot)] = e1
        if e2 > 0:
            joint[(pivot, x)] = e2
    m_piv = min(p1[pivot], p2.get(pivot, 0.0))
    e2_piv = p2.get(pivot, 0.0) - m_piv
    joint[(pivot, pivot)] = p1[pivot] - excess1 + e2_piv
    if joint[(pivot, pivot)] < 0:
        raise FeasibilityError("pivot cell went negative; condition violated")
    return CouplingTable(outcomes=outcomes, pivot=pivot, joint=joint, p1=dict(p1), p2=dict(p2))


@dataclass
class DominanceRow:
    threshold: int
    surv_z: float
    se_z: float
    surv_zhat: float
    se_zhat: float
    violation_sigma: float


@dataclass
class DominanceReport:
    rows: list
    max_violation_sigma: float
    dominates: bool
    trials: int
    delta: float


def dominance_test(
    params: TreeParams,
    p: float,
    q: float,
    delta: float,
    trials: int,
    seed: int,
    sigma_limit: float = 3.0,
) -> DominanceReport:
    """Empirical check that the slab leaf count at (p, q) is stochastically
    dominated by the cover's leaf count at (p, q - delta).

    Samples are independent on the two sides; for every threshold t the
    survival functions P(Z >= t) and P(Z-hat >= t) are compared in units of
    their combined standard error.
    """
    if not 0.0 <= q - delta <= 1.0:
        raise ParameterError(f"reduced probability q - delta = {q - delta} invalid")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    zs = []
    zhs = []
    for trial in range(trials):
        oracle = EdgeOracle(params, p, q, seed, trial)
        zs.append(leaf_count_Z(params, oracle))
        config = HatConfig.random(params, p, q - delta, seed + 1, trial)
        zhs.append(leaf_count_Zhat(params, config))
    top = max(max(zs), max(zhs))
    rows = []
    worst = 0.0
    for t in range(top + 2):
        fz = sum(z >= t for z in zs) / trials
        fh = sum(z >= t for z in zhs) / trials
        se_z = math.sqrt(fz * (1.0 - fz) / trials)
        se_h = math.sqrt(fh * (1.0 - fh) / trials)
        combined = math.hypot(se_z, se_h)
        excess = fz - fh
        sigma = excess / combined if combined > 0 else (math.inf if excess > 0 else 0.0)
        rows.append(
            DominanceRow(
                threshold=t,
                surv_z=fz,
                se_z=se_z,
                surv_zhat=fh,
                se_zhat=se_h,
                violation_sigma=max(sigma, 0.0),
            )
        )
        worst = max(worst, sigma)
    return DominanceReport(
        rows=rows,
        max_violation_sigma=worst,
        dominates=worst <= sigma_limit,
        trials=trials,
        delta=delta,
    )
