"""Sparse storage and ingestion of discrete-valued directed/undirected networks.

A network over n nodes holds one dyad per unordered node pair (i, j), i < j.
For directed networks the dyad is the ordered pair (y_ij, y_ji); for
undirected networks it is the single label y_ij.  The dominant "no
relationship" dyad is called the baseline and is never stored, so memory
scales with the number of nonbaseline dyads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

__all__ = [
    "EdgeAlphabet",
    "DyadAlphabet",
    "SparseNetwork",
    "binary_alphabet",
    "signed_alphabet",
    "make_dyad_alphabet",
    "load_edge_list",
    "save_edge_list",
    "excess_trust",
    "EdgeListError",
    "UnsupportedStatisticError",
]


class EdgeListError(ValueError):
    """Malformed edge-list input (bad row, duplicate pair, unknown label)."""


class UnsupportedStatisticError(ValueError):
    """A network statistic was requested for an incompatible alphabet."""


@dataclass(frozen=True)
class EdgeAlphabet:
    """Finite ordered set of integer edge labels, with a designated zero label."""

    values: tuple[int, ...]
    zero_label: int = 0

    def __post_init__(self):
        if len(set(self.values)) != len(self.values):
            raise ValueError("edge labels must be distinct")
        if len(self.values) < 2:
            raise ValueError("edge alphabet needs at least 2 labels")
        if self.zero_label not in self.values:
            raise ValueError("zero_label must be one of the edge labels")

    @property
    def size(self) -> int:
        return len(self.values)


def binary_alphabet() -> EdgeAlphabet:
    return EdgeAlphabet(values=(0, 1), zero_label=0)


def signed_alphabet() -> EdgeAlphabet:
    return EdgeAlphabet(values=(-1, 0, 1), zero_label=0)


@dataclass(frozen=True)
class DyadAlphabet:
    """Dyad sample space: ordered label pairs if directed, single labels if not.

    ``transpose`` maps the index of dyad (a, b) to the index of (b, a); it is
    the identity for undirected alphabets.
    """

    edge: EdgeAlphabet
    directed: bool
    dyad_values: tuple = field(init=False)
    baseline_index: int = field(init=False)
    transpose: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        z = self.edge.zero_label
        if self.directed:
            dyads = tuple((a, b) for a in self.edge.values for b in self.edge.values)
            base = (z, z)
        else:
            dyads = tuple(self.edge.values)
            base = z
        index = {d: i for i, d in enumerate(dyads)}
        if self.directed:
            tr = np.array([index[(b, a)] for (a, b) in dyads], dtype=np.intp)
        else:
            tr = np.arange(len(dyads), dtype=np.intp)
        object.__setattr__(self, "dyad_values", dyads)
        object.__setattr__(self, "baseline_index", index[base])
        object.__setattr__(self, "transpose", tr)
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.dyad_values)

    def index_of(self, dyad) -> int:
        return self._index[dyad]

    def transpose_classes(self) -> list[tuple[int, ...]]:
        """Orbits of the transpose involution, as sorted index tuples."""
        seen = set()
        classes = []
        for i in range(self.size):
            j = int(self.transpose[i])
            key = (min(i, j), max(i, j)) if i != j else (i,)
            if key not in seen:
                seen.add(key)
                classes.append(key)
        return classes


def make_dyad_alphabet(edge: EdgeAlphabet, directed: bool) -> DyadAlphabet:
    return DyadAlphabet(edge=edge, directed=directed)


class SparseNetwork:
    """Immutable sparse network: node count plus a map of nonbaseline dyads.

    Keys are node pairs (i, j) with i < j; values are dyad indices into the
    alphabet.  Absent pairs implicitly hold the baseline dyad.
    """

    def __init__(self, n: int, alphabet: DyadAlphabet,
                 nonbaseline: dict[tuple[int, int], int],
                 node_labels: list[str] | None = None):
        b = alphabet.baseline_index
        for (i, j), d in nonbaseline.items():
            if not (0 <= i < j < n):
                raise ValueError(f"bad pair key ({i}, {j}) for n={n}")
            if d == b:
                raise ValueError(f"baseline dyad stored at ({i}, {j})")
            if not (0 <= d < alphabet.size):
                raise ValueError(f"dyad index {d} out of range at ({i}, {j})")
        self.n = n
        self.alphabet = alphabet
        self.nonbaseline = dict(nonbaseline)
        self.node_labels = node_labels
        # array views used by the hot loops; pairs sorted for determinism
        keys = sorted(self.nonbaseline)
        self.pair_i = np.array([k[0] for k in keys], dtype=np.intp)
        self.pair_j = np.array([k[1] for k in keys], dtype=np.intp)
        self.dyad_idx = np.array([self.nonbaseline[k] for k in keys], dtype=np.intp)

    @property
    def num_nonbaseline(self) -> int:
        return len(self.nonbaseline)

    @property
    def num_pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    def dyad_of(self, i: int, j: int) -> int:
        """Dyad index for the ordered pair (i, j); transposed when i > j."""
        if i == j:
            raise ValueError("self-pairs have no dyad")
        if i < j:
            return self.nonbaseline.get((i, j), self.alphabet.baseline_index)
        d = self.nonbaseline.get((j, i), self.alphabet.baseline_index)
        return int(self.alphabet.transpose[d])


def _edge_rows(network: SparseNetwork) -> Iterable[tuple[int, int, int]]:
    z = network.alphabet.edge.zero_label
    if network.alphabet.directed:
        for (i, j), d in network.nonbaseline.items():
            a, b = network.alphabet.dyad_values[d]
            if a != z:
                yield (i, j, a)
            if b != z:
                yield (j, i, b)
    else:
        for (i, j), d in network.nonbaseline.items():
            yield (i, j, network.alphabet.dyad_values[d])


def load_edge_list(stream: TextIO, alphabet: EdgeAlphabet,
                   directed: bool = True) -> SparseNetwork:
    """Read a TSV edge list ("i<TAB>j<TAB>v" rows, '#' metadata lines).

    Node count comes from a '#n=' header if present, else max id + 1.
    Directed rows (i, j, v) and (j, i, w) combine into the dyad (v, w) keyed
    by the pair with i < j; a missing direction defaults to the zero label.
    """
    n_declared = None
    valid = set(alphabet.values)
    z = alphabet.zero_label
    edges: dict[tuple[int, int], int] = {}
    max_id = -1
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("n="):
                n_declared = int(body[2:])
            elif body.startswith("directed="):
                declared = bool(int(body[len("directed="):]))
                if declared != directed:
                    raise EdgeListError(
                        f"line {lineno}: header directed={int(declared)} "
                        f"contradicts requested directed={int(directed)}")
            continue
        parts = line.split()
        if len(parts) != 3:
            raise EdgeListError(f"line {lineno}: expected 'i j v', got {line!r}")
        try:
            i, j, v = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise EdgeListError(f"line {lineno}: non-integer field") from exc
        if i < 0 or j < 0:
            raise EdgeListError(f"line {lineno}: negative node id")
        if v not in valid:
            raise EdgeListError(f"line {lineno}: label {v} not in alphabet")
        if i == j:
            if v != z:
                raise EdgeListError(f"line {lineno}: self-loop with nonzero label")
            continue  # zero-valued self-loop rows are tolerated
        if (i, j) in edges:
            raise EdgeListError(f"line {lineno}: duplicate edge ({i}, {j})")
        edges[(i, j)] = v
        max_id = max(max_id, i, j)

    n = n_declared if n_declared is not None else max_id + 1
    if max_id >= n:
        raise EdgeListError(f"node id {max_id} exceeds declared n={n}")

    dyad_alpha = make_dyad_alphabet(alphabet, directed)
    nonbaseline: dict[tuple[int, int], int] = {}
    if directed:
        seen_pairs = set()
        for (i, j) in edges:
            a, b = (i, j) if i < j else (j, i)
            seen_pairs.add((a, b))
        for (a, b) in seen_pairs:
            v = edges.get((a, b), z)
            w = edges.get((b, a), z)
            if (v, w) != (z, z):
                nonbaseline[(a, b)] = dyad_alpha.index_of((v, w))
    else:
        for (i, j), v in edges.items():
            a, b = (i, j) if i < j else (j, i)
            key = (a, b)
            if key in nonbaseline and key != (i, j):
                raise EdgeListError(f"duplicate undirected edge ({i}, {j})")
            if v != z:
                nonbaseline[key] = dyad_alpha.index_of(v)
    return SparseNetwork(n=max(n, 0), alphabet=dyad_alpha, nonbaseline=nonbaseline)


def save_edge_list(network: SparseNetwork, sink: TextIO) -> None:
    """Write the network in the TSV format accepted by :func:`load_edge_list`.

    Rows are sorted by (i, j) so repeated saves are byte-stable.
    """
    sink.write(f"#n={network.n}\n")
    sink.write(f"#directed={int(network.alphabet.directed)}\n")
    for i, j, v in sorted(_edge_rows(network)):
        sink.write(f"{i}\t{j}\t{v}\n")


def excess_trust(network: SparseNetwork, i: int) -> int:
    """Incoming positive minus incoming negative ratings of node i."""
    alpha = network.alphabet
    if not alpha.directed or alpha.edge.values != (-1, 0, 1):
        raise UnsupportedStatisticError("excess trust needs a signed directed network")
    if not (0 <= i < network.n):
        raise ValueError(f"node id {i} out of range")
    total = 0
    for (a, b), d in network.nonbaseline.items():
        v, w = alpha.dyad_values[d]
        if b == i:
            total += v  # y_ab, incoming to b
        elif a == i:
            total += w  # y_ba, incoming to a
    return total
