"""
Gene network representation, edge-list I/O and misspecification protocols.

Genes are addressed by string labels at the file boundary and by dense
integer indices everywhere else.
"""

import io
import math
from collections.abc import Iterable, Mapping
from enum import Enum
from functools import cached_property
from typing import TextIO

import numpy as np
from loguru import logger
from scipy import sparse

from netcourse.exceptions import DimensionError, ParseError, ValidationError


class GeneNetwork:
    """
    Undirected gene network without self-loops.

    Immutable after construction: adjacency sets are frozen and every
    derived view (edge list, sparse matrix) is cached on first use.
    """

    def __init__(
        self,
        node_labels: Iterable[str],
        edges: Iterable[tuple[int, int]] = (),
        pathway_membership: Mapping[str, Iterable[int]] | None = None,
    ):
        self._labels: tuple[str, ...] = tuple(node_labels)
        if len(set(self._labels)) != len(self._labels):
            raise ValidationError("node labels must be unique")
        p = len(self._labels)

        adjacency: list[set[int]] = [set() for _ in range(p)]
        for a, b in edges:
            if not (0 <= a < p and 0 <= b < p):
                raise DimensionError(f"edge ({a}, {b}) references a node outside [0, {p})")
            if a == b:
                continue
            adjacency[a].add(b)
            adjacency[b].add(a)
        self._adjacency: tuple[frozenset[int], ...] = tuple(frozenset(s) for s in adjacency)

        membership: dict[str, frozenset[int]] = {}
        for pathway, members in (pathway_membership or {}).items():
            member_set = frozenset(int(g) for g in members)
            if any(not 0 <= g < p for g in member_set):
                raise DimensionError(f"pathway {pathway} references a node outside [0, {p})")
            membership[pathway] = member_set
        self._pathways = membership
        self._index = {label: i for i, label in enumerate(self._labels)}

    # ------------------------------------------------------------------
    # Basic queries
    # ------------------------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self._labels)

    @property
    def node_labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def adjacency(self) -> tuple[frozenset[int], ...]:
        return self._adjacency

    @property
    def pathway_membership(self) -> dict[str, frozenset[int]]:
        return dict(self._pathways)

    @property
    def has_pathways(self) -> bool:
        return bool(self._pathways)

    @property
    def edge_count(self) -> int:
        return sum(len(s) for s in self._adjacency) // 2

    def index_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise ValidationError(f"unknown gene: {label}") from None

    def __contains__(self, label: object) -> bool:
        return label in self._index

    def __len__(self) -> int:
        return self.node_count

    def __repr__(self) -> str:
        return (
            f"GeneNetwork(nodes={self.node_count}, edges={self.edge_count}, "
            f"pathways={len(self._pathways)})"
        )

    def neighbors(self, g: int) -> frozenset[int]:
        """Neighbor set of node g (empty for isolated nodes)."""
        if not 0 <= g < self.node_count:
            raise DimensionError(f"node index {g} outside [0, {self.node_count})")
        return self._adjacency[g]

    def degree(self, g: int) -> int:
        return len(self.neighbors(g))

    @cached_property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """Sorted (i, j) pairs with i < j."""
        return tuple(
            (i, j) for i, nbrs in enumerate(self._adjacency) for j in sorted(nbrs) if i < j
        )

    def edge_set(self) -> set[frozenset[str]]:
        """Edges as unordered label pairs, for comparisons across re-indexing."""
        return {frozenset((self._labels[i], self._labels[j])) for i, j in self.edges}

    @cached_property
    def adjacency_matrix(self) -> sparse.csr_matrix:
        """Symmetric 0/1 CSR adjacency used for vectorized neighbor sums."""
        p = self.node_count
        if not self.edges:
            return sparse.csr_matrix((p, p), dtype=np.float64)
        rows, cols = np.array(self.edges, dtype=np.int64).T
        data = np.ones(2 * rows.size, dtype=np.float64)
        return sparse.csr_matrix(
            (data, (np.concatenate([rows, cols]), np.concatenate([cols, rows]))), shape=(p, p)
        )

    @cached_property
    def neighbor_lists(self) -> tuple[np.ndarray, ...]:
        """Neighbor indices per node as int arrays, for per-gene sweeps."""
        return tuple(np.array(sorted(s), dtype=np.int64) for s in self._adjacency)

    def spin_sums(self, column: np.ndarray) -> np.ndarray:
        """Sum over neighbors of (2x - 1) for every node, given one state column."""
        spins = 2.0 * np.asarray(column, dtype=np.float64) - 1.0
        return np.asarray(self.adjacency_matrix @ spins, dtype=np.float64)

    # ------------------------------------------------------------------
    # Derived networks
    # ------------------------------------------------------------------

    def with_edges(self, edges: Iterable[tuple[int, int]]) -> "GeneNetwork":
        return GeneNetwork(self._labels, edges, self._pathways)

    def with_pathways(self, pathway_membership: Mapping[str, Iterable[int]]) -> "GeneNetwork":
        return GeneNetwork(self._labels, self.edges, pathway_membership)

    def add_isolated_nodes(self, labels: Iterable[str]) -> "GeneNetwork":
        """Append unseen labels as isolated nodes; known labels are ignored."""
        new = [label for label in dict.fromkeys(labels) if label not in self._index]
        if not new:
            return self
        logger.warning(f"[network] Adding {len(new)} isolated nodes absent from the edge list")
        return GeneNetwork(self._labels + tuple(new), self.edges, self._pathways)

    def reindex(self, labels: Iterable[str]) -> "GeneNetwork":
        """Restrict and reorder nodes to the given labels (all must exist)."""
        order = list(labels)
        position = {label: i for i, label in enumerate(order)}
        old_to_new = {self.index_of(label): i for label, i in position.items()}
        edges = [
            (old_to_new[i], old_to_new[j])
            for i, j in self.edges
            if i in old_to_new and j in old_to_new
        ]
        pathways = {
            name: [old_to_new[g] for g in members if g in old_to_new]
            for name, members in self._pathways.items()
        }
        return GeneNetwork(order, edges, pathways)


# ----------------------------------------------------------------------
# Edge-list I/O
# ----------------------------------------------------------------------


def _lines(text: str | TextIO) -> Iterable[str]:
    return io.StringIO(text) if isinstance(text, str) else text


def _content_lines(text: str | TextIO) -> Iterable[tuple[int, str]]:
    for number, raw in enumerate(_lines(text), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield number, line


def load_edge_list(text: str | TextIO, node_list: str | TextIO | None = None) -> GeneNetwork:
    """
    Parse a tab-separated edge list into a GeneNetwork.

    Duplicate and reversed edges collapse into one undirected edge and
    self-loop lines are dropped. Nodes appearing only in node_list become
    isolated nodes.
    """
    labels: dict[str, int] = {}
    edges: set[tuple[int, int]] = set()
    loops = 0

    def index(label: str) -> int:
        return labels.setdefault(label, len(labels))

    for number, line in _content_lines(text):
        fields = line.split("\t")
        if len(fields) != 2 or not all(f.strip() for f in fields):
            raise ParseError(f"expected two tab-separated gene identifiers, got {line!r}", number)
        a, b = (index(f.strip()) for f in fields)
        if a == b:
            loops += 1
            continue
        edges.add((min(a, b), max(a, b)))

    if node_list is not None:
        for _, line in _content_lines(node_list):
            index(line.strip())

    if not labels:
        raise ParseError("edge list is empty")
    if loops:
        logger.debug(f"[network] Dropped {loops} self-loop lines")

    net = GeneNetwork(labels.keys(), sorted(edges))
    logger.info(f"[network] Loaded network with {net.node_count} nodes and {net.edge_count} edges")
    return net


def dump_edge_list(net: GeneNetwork) -> str:
    """Serialize edges as tab-separated label pairs; inverse of load_edge_list."""
    labels = net.node_labels
    return "".join(f"{labels[i]}\t{labels[j]}\n" for i, j in net.edges)


def dump_node_list(net: GeneNetwork) -> str:
    return "".join(f"{label}\n" for label in net.node_labels)


def load_pathways(text: str | TextIO, net: GeneNetwork) -> GeneNetwork:
    """Attach `pathway_id<TAB>gene_id` memberships; unknown genes join as isolated nodes."""
    pairs: list[tuple[str, str]] = []
    for number, line in _content_lines(text):
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"expected pathway<TAB>gene, got {line!r}", number)
        pairs.append((fields[0].strip(), fields[1].strip()))
    if not pairs:
        raise ParseError("pathway file is empty")

    net = net.add_isolated_nodes(gene for _, gene in pairs)
    membership: dict[str, set[int]] = {}
    for pathway, gene in pairs:
        membership.setdefault(pathway, set()).add(net.index_of(gene))
    logger.info(f"[network] Loaded {len(membership)} pathways")
    return net.with_pathways(membership)


def dump_pathways(net: GeneNetwork) -> str:
    labels = net.node_labels
    return "".join(
        f"{pathway}\t{labels[g]}\n"
        for pathway, members in sorted(net.pathway_membership.items())
        for g in sorted(members)
    )


# ----------------------------------------------------------------------
# Misspecification
# ----------------------------------------------------------------------


class PerturbationKind(str, Enum):
    """Ways the fitting network departs from the generating one."""
    DEL = "del"
    ADD = "add"
    DEL_ADD = "del_add"


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def perturbation_plan(kind: PerturbationKind, level: float, edge_count: int) -> tuple[float, int]:
    """Map a misspecification level (e.g. 0.3) to (delete_fraction, add_count)."""
    if not 0.0 <= level <= 1.0:
        raise ValidationError(f"perturbation level must be in [0, 1], got {level}")
    add_count = _round_half_up(level * edge_count)
    if kind == PerturbationKind.DEL:
        return level, 0
    if kind == PerturbationKind.ADD:
        return 0.0, add_count
    return level, add_count


def perturb_network(
    net: GeneNetwork, delete_fraction: float, add_count: int, seed: int
) -> GeneNetwork:
    """
    Delete round(delete_fraction * |E|) existing edges, then add add_count new ones.

    Deletion samples the sorted edge list without replacement; addition uses
    rejection sampling over node pairs not connected in the current edge set.
    """
    if not 0.0 <= delete_fraction <= 1.0:
        raise ValidationError(f"delete_fraction must be in [0, 1], got {delete_fraction}")
    if add_count < 0:
        raise ValidationError(f"add_count must be nonnegative, got {add_count}")

    rng = np.random.default_rng(seed)
    edges = list(net.edges)
    n_delete = _round_half_up(delete_fraction * len(edges))
    if n_delete:
        drop = set(rng.choice(len(edges), size=n_delete, replace=False).tolist())
        edges = [e for k, e in enumerate(edges) if k not in drop]

    p = net.node_count
    present = set(edges)
    absent = p * (p - 1) // 2 - len(present)
    if add_count > absent:
        raise ValidationError(f"cannot add {add_count} edges, only {absent} node pairs are free")

    added = 0
    while added < add_count:
        a, b = (int(v) for v in rng.integers(0, p, size=2))
        if a == b:
            continue
        pair = (min(a, b), max(a, b))
        if pair in present:
            continue
        present.add(pair)
        edges.append(pair)
        added += 1

    logger.info(
        f"[network] Perturbed network: deleted {n_delete}, added {add_count}, "
        f"{len(present)} edges remain"
    )
    return net.with_edges(edges)


# ----------------------------------------------------------------------
# Synthetic pathway network
# ----------------------------------------------------------------------


def synthetic_pathway_network(
    n_genes: int = 1668,
    n_edges: int = 8011,
    n_pathways: int = 33,
    shared_fraction: float = 0.15,
    min_pathway_size: int = 8,
    seed: int = 0,
) -> GeneNetwork:
    """
    Overlapping-pathway network with exactly n_genes nodes and n_edges edges.

    Every gene belongs to one primary pathway; a shared_fraction of genes also
    joins a second one. Edges only connect genes that share a pathway, and a
    pathway is drawn with probability proportional to its size so intra-pathway
    degrees stay comparable.
    """
    if n_pathways < 1 or n_genes < n_pathways * min_pathway_size:
        raise ValidationError("not enough genes for the requested pathway count and size")
    if not 0.0 <= shared_fraction <= 1.0:
        raise ValidationError("shared_fraction must be in [0, 1]")

    rng = np.random.default_rng(seed)
    spare = n_genes - n_pathways * min_pathway_size
    sizes = min_pathway_size + rng.multinomial(spare, rng.dirichlet(np.full(n_pathways, 2.0)))
    order = rng.permutation(n_genes)
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    members: list[set[int]] = [
        set(order[bounds[k]:bounds[k + 1]].tolist()) for k in range(n_pathways)
    ]

    if n_pathways > 1:
        primary = np.empty(n_genes, dtype=np.int64)
        for k, group in enumerate(members):
            primary[list(group)] = k
        for g in rng.choice(n_genes, size=_round_half_up(shared_fraction * n_genes), replace=False):
            other = int(rng.integers(0, n_pathways - 1))
            if other >= primary[g]:
                other += 1
            members[other].add(int(g))

    pools = [np.array(sorted(group), dtype=np.int64) for group in members]
    capacity = len({
        (min(a, b), max(a, b)) for pool in pools for a in pool for b in pool if a != b
    })
    if n_edges > capacity:
        raise ValidationError(f"requested {n_edges} edges but pathways only admit {capacity}")

    weights = np.array([pool.size for pool in pools], dtype=float)
    weights /= weights.sum()
    edges: set[tuple[int, int]] = set()
    while len(edges) < n_edges:
        pool = pools[int(rng.choice(n_pathways, p=weights))]
        a, b = rng.choice(pool, size=2, replace=False)
        edges.add((int(min(a, b)), int(max(a, b))))

    width = len(str(n_genes))
    labels = [f"G{i:0{width}d}" for i in range(n_genes)]
    pathways = {f"P{k + 1:02d}": group for k, group in enumerate(members)}
    net = GeneNetwork(labels, sorted(edges), pathways)
    logger.info(f"[network] Generated synthetic network: {net!r}")
    return net
