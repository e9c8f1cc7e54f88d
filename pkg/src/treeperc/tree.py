"""Addressing and combinatorics of the two-range oriented tree.

Vertices are finite sequences over {1..d}, stored as plain tuples; the empty
tuple is the root.  Every vertex points to its d children with short edges and
to its d^k descendants k levels below with long edges.  The "window" of a
vertex is the slab of its descendants fewer than k levels down; windows are
encoded as bitmasks over a breadth-first slot order.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import OutOfSlabError, ParameterError

#: Largest admissible window bitmask width.  The exact window chain is
#: exponential in this width, so larger (d, k) are rejected outright.
MAX_WINDOW_BITS = 20

ROOT: tuple = ()


@dataclass(frozen=True)
class TreeParams:
    """Branching number d and long-edge range k."""

    d: int
    k: int

    def __post_init__(self):
        if self.d < 2 or self.k < 2:
            raise ParameterError(f"need d >= 2 and k >= 2, got d={self.d}, k={self.k}")
        if self.window_slots > MAX_WINDOW_BITS:
            raise ParameterError(
                f"window has {self.window_slots} slots, exceeding the configured "
                f"cap of {MAX_WINDOW_BITS}; (d={self.d}, k={self.k}) is too large "
                "for exact window-chain computation"
            )

    @property
    def window_slots(self) -> int:
        """Number of vertices in a window slab: 1 + d + ... + d^(k-1)."""
        return (self.d**self.k - 1) // (self.d - 1)

    @property
    def n_long_children(self) -> int:
        return self.d**self.k

    @property
    def top_slot_base(self) -> int:
        """Slot index of the first height-(k-1) vertex."""
        return (self.d ** (self.k - 1) - 1) // (self.d - 1)

    @property
    def n_top_slots(self) -> int:
        return self.d ** (self.k - 1)


def window_slot_count(params: TreeParams) -> int:
    """Cardinality of the window slab below a single vertex."""
    return params.window_slots


def height(v: tuple) -> int:
    return len(v)


def parent(v: tuple) -> tuple:
    if not v:
        raise ValueError("the root has no parent")
    return v[:-1]


def ancestor_at(v: tuple, m: int) -> tuple:
    """Ancestor of v obtained by stripping the last m digits."""
    if m < 0 or m > len(v):
        raise ValueError(f"cannot go up {m} levels from a height-{len(v)} vertex")
    return v[: len(v) - m]


def concat(u: tuple, v: tuple) -> tuple:
    return u + v


def slot_index(u: tuple, params: TreeParams) -> int:
    """Breadth-first slot of a window vertex: slot(o)=0, slot(u.j)=d*slot(u)+j."""
    if len(u) >= params.k:
        raise OutOfSlabError(f"vertex {u} has height {len(u)} >= k={params.k}")
    i = 0
    for digit in u:
        if not 1 <= digit <= params.d:
            raise ValueError(f"digit {digit} outside [1, {params.d}]")
        i = params.d * i + digit
    return i


def slot_vertex(i: int, params: TreeParams) -> tuple:
    """Inverse of :func:`slot_index`."""
    if not 0 <= i < params.window_slots:
        raise OutOfSlabError(f"slot {i} outside [0, {params.window_slots})")
    digits = []
    while i > 0:
        digits.append((i - 1) % params.d + 1)
        i = (i - 1) // params.d
    return tuple(reversed(digits))


def slot_height(i: int, params: TreeParams) -> int:
    """Height of the vertex occupying slot i."""
    if not 0 <= i < params.window_slots:
        raise OutOfSlabError(f"slot {i} outside [0, {params.window_slots})")
    h = 0
    level_end = 1
    while i >= level_end:
        h += 1
        level_end += params.d ** h
    return h


def window_size(bits: int) -> int:
    """Number of slots set in a window bitmask."""
    return bits.bit_count()


def window_height(bits: int, params: TreeParams) -> int:
    """Maximum slot height present in a nonempty window."""
    if bits <= 0:
        raise ValueError("window is empty")
    return slot_height(bits.bit_length() - 1, params)


def window_vertices(bits: int, params: TreeParams) -> list[tuple]:
    """Window bitmask as a list of (relative) vertex paths, slot order."""
    return [slot_vertex(i, params) for i in range(params.window_slots) if bits >> i & 1]


def vertices_to_window(vertices, params: TreeParams) -> int:
    """Inverse of :func:`window_vertices`."""
    bits = 0
    for u in vertices:
        bits |= 1 << slot_index(u, params)
    return bits


def long_selector(index: int, params: TreeParams) -> tuple:
    """The index-th element of [d]^k in lexicographic order (0-based index)."""
    if not 0 <= index < params.n_long_children:
        raise ValueError(f"long selector index {index} outside [0, {params.n_long_children})")
    digits = []
    for _ in range(params.k):
        digits.append(index % params.d + 1)
        index //= params.d
    return tuple(reversed(digits))


def long_selector_index(s: tuple, params: TreeParams) -> int:
    """Inverse of :func:`long_selector`."""
    if len(s) != params.k:
        raise ValueError(f"long selector must have length k={params.k}")
    index = 0
    for digit in s:
        if not 1 <= digit <= params.d:
            raise ValueError(f"digit {digit} outside [1, {params.d}]")
        index = index * params.d + digit - 1
    return index
