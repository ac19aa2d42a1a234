"""Connected labeled multigraphs with prescribed degrees, symmetry factors and
edge-kind annotation for the real-time / imaginary-time expansion.

A graph is identified by its multiplicity map on labeled vertices; no
isomorphism quotient is taken, the sums carry explicit 1/Sym(G) weights.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Iterator, Sequence


class GraphError(ValueError):
    """No graph exists for the requested degrees, or input is malformed."""


class GraphRejected(ValueError):
    """An edge-kind assignment violates the construction rules."""


# -- vertex kinds

@dataclass(frozen=True)
class External:
    """Point of the observable. Sits on the time-ordered block with u = 0."""

    @property
    def tag(self):
        return "External"


@dataclass(frozen=True)
class RealTimeVertex:
    branch: int = 1

    def __post_init__(self):
        if self.branch not in (1, 2):
            raise GraphError(f"branch must be 1 or 2, got {self.branch}")

    @property
    def tag(self):
        return f"RealTime{self.branch}"


@dataclass(frozen=True)
class KmsVertex:
    """Insertion of the imaginary-time correction at position ``index`` of the u-ordering."""

    index: int = 0

    @property
    def tag(self):
        return f"Kms{self.index}"


VertexKind = External | RealTimeVertex | KmsVertex


def kind_from_tag(tag: str):
    if tag == "External":
        return External()
    if tag.startswith("RealTime"):
        return RealTimeVertex(int(tag[len("RealTime"):]))
    if tag.startswith("Kms"):
        return KmsVertex(int(tag[len("Kms"):]))
    raise GraphError(f"unknown vertex tag {tag!r}")


class EdgeKind(enum.Enum):
    WIGHTMAN = "Wightman"
    FEYNMAN = "Feynman"
    ANTI_FEYNMAN = "AntiFeynman"
    THERMAL_MIXED = "ThermalMixed"


def _branch(k) -> int:
    return 1 if isinstance(k, External) else k.branch


def edge_kind(ki, kj) -> EdgeKind:
    """Kind of an edge joining vertices of kinds ``ki`` and ``kj``."""
    if isinstance(ki, KmsVertex) or isinstance(kj, KmsVertex):
        return EdgeKind.THERMAL_MIXED
    a, b = _branch(ki), _branch(kj)
    if a == b == 1:
        return EdgeKind.FEYNMAN
    if a == b == 2:
        return EdgeKind.ANTI_FEYNMAN
    return EdgeKind.WIGHTMAN


# -- graphs

@dataclass(frozen=True)
class MultiGraph:
    degrees: tuple[int, ...]
    multiplicity: tuple[tuple[tuple[int, int], int], ...]  # sorted ((i, j), l_ij), i < j, l_ij > 0
    vertex_kind: tuple | None = None
    edge_kinds: tuple[tuple[tuple[int, int], EdgeKind], ...] | None = None

    def __post_init__(self):
        n = len(self.degrees)
        seen = [0] * n
        for (i, j), l in self.multiplicity:
            if not (0 <= i < j < n) or l <= 0:
                raise GraphError(f"bad edge entry ({i}, {j}) x {l}")
            seen[i] += l
            seen[j] += l
        if tuple(seen) != tuple(self.degrees):
            raise GraphError(f"multiplicities give degrees {seen}, declared {list(self.degrees)}")
        if self.vertex_kind is not None and len(self.vertex_kind) != n:
            raise GraphError("one vertex kind per vertex required")

    @classmethod
    def from_edges(cls, degrees: Sequence[int], edges: dict | Sequence, vertex_kind=None):
        items = edges.items() if isinstance(edges, dict) else ((tuple(e[:2]), e[2]) for e in edges)
        mult = tuple(sorted(((min(i, j), max(i, j)), int(l)) for (i, j), l in items if l))
        return cls(tuple(degrees), mult, None if vertex_kind is None else tuple(vertex_kind))

    @property
    def n_vertices(self) -> int:
        return len(self.degrees)

    @property
    def n_edges(self) -> int:
        return sum(l for _, l in self.multiplicity)

    def mult(self, i: int, j: int) -> int:
        key = (min(i, j), max(i, j))
        return dict(self.multiplicity).get(key, 0)

    def edge_list(self) -> list[tuple[int, int]]:
        """Every edge once, parallel edges repeated, oriented s(e) < r(e)."""
        return [ij for ij, l in self.multiplicity for _ in range(l)]

    def is_connected(self, among: Sequence[int] | None = None) -> bool:
        verts = list(range(self.n_vertices)) if among is None else list(among)
        if not verts:
            return True
        allowed = set(verts)
        adj = {v: set() for v in verts}
        for (i, j), _ in self.multiplicity:
            if i in allowed and j in allowed:
                adj[i].add(j)
                adj[j].add(i)
        stack, seen = [verts[0]], {verts[0]}
        while stack:
            for w in adj[stack.pop()] - seen:
                seen.add(w)
                stack.append(w)
        return len(seen) == len(verts)

    def with_kinds(self, kinds) -> "MultiGraph":
        return MultiGraph(self.degrees, self.multiplicity, tuple(kinds), self.edge_kinds)

    def to_json_obj(self) -> dict:
        obj = {"degrees": list(self.degrees),
               "edges": [[i, j, l] for (i, j), l in self.multiplicity],
               "kinds": [k.tag for k in self.vertex_kind] if self.vertex_kind else []}
        if self.edge_kinds is not None:
            obj["edge_kinds"] = [[i, j, k.value] for (i, j), k in self.edge_kinds]
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str | dict) -> "MultiGraph":
        obj = json.loads(text) if isinstance(text, str) else text
        kinds = tuple(kind_from_tag(t) for t in obj.get("kinds", [])) or None
        g = cls.from_edges(obj["degrees"], obj["edges"], kinds)
        if "edge_kinds" in obj:
            ek = tuple(((i, j), EdgeKind(k)) for i, j, k in obj["edge_kinds"])
            g = MultiGraph(g.degrees, g.multiplicity, g.vertex_kind, ek)
        return g


def _fill(degrees: list[int]) -> Iterator[dict]:
    """All self-loop-free multiplicity maps realising ``degrees`` (not nec. connected).

    Vertex 0's legs are distributed over the later vertices, then the
    remaining degree list on vertices 1.. is filled recursively.
    """
    n = len(degrees)

    def rec(i, rem):
        if i == n - 1:
            if rem[i] == 0:
                yield {}
            return
        targets = list(range(i + 1, n))

        def split(k, left, acc):
            if k == len(targets):
                if left == 0:
                    yield acc
                return
            j = targets[k]
            for l in range(min(left, rem[j]), -1, -1):
                yield from split(k + 1, left - l, acc + [(j, l)])

        for choice in split(0, rem[i], []):
            new = list(rem)
            new[i] = 0
            for j, l in choice:
                new[j] -= l
            for rest in rec(i + 1, new):
                d = dict(rest)
                for j, l in choice:
                    if l:
                        d[(i, j)] = l
                yield d

    if n == 0:
        return
    yield from rec(0, list(degrees))


def enumerate_connected(degrees: Sequence[int]) -> list[MultiGraph]:
    """All connected self-loop-free multigraphs on labeled vertices with the given degrees."""
    degrees = [int(d) for d in degrees]
    if not degrees:
        raise GraphError("need at least one vertex")
    if any(d < 1 for d in degrees):
        raise GraphError("every vertex needs at least one leg")
    if sum(degrees) % 2:
        raise GraphError(f"odd total degree {sum(degrees)}: no graph exists")
    out = []
    for m in _fill(degrees):
        g = MultiGraph.from_edges(degrees, m)
        if g.is_connected():
            out.append(g)
    return out


def symmetry_factor(G: MultiGraph) -> int:
    """prod_{i<j} l_ij!"""
    return math.prod(math.factorial(l) for _, l in G.multiplicity)


def assign_edge_kinds(G: MultiGraph, vertex_kinds=None, require_connected: bool = True) -> MultiGraph:
    """Annotate every vertex pair with its propagator kind.

    With ``require_connected`` every internal vertex must be linked to the
    external block (externals plus real-time vertices) through some path;
    vacuum pieces are rejected.
    """
    kinds = tuple(vertex_kinds) if vertex_kinds is not None else G.vertex_kind
    if kinds is None or len(kinds) != G.n_vertices:
        raise GraphRejected("each vertex must carry a kind")
    for k in kinds:
        if not isinstance(k, (External, RealTimeVertex, KmsVertex)):
            raise GraphRejected(f"unknown vertex kind {k!r}")
    if require_connected:
        if not G.is_connected():
            raise GraphRejected("graph is disconnected from the external block")
        if not any(isinstance(k, External) for k in kinds) and G.n_vertices > 1:
            # pure vacuum graphs cancel against the normalisation
            raise GraphRejected("no external vertex: vacuum graph")
    ek = tuple((ij, edge_kind(kinds[ij[0]], kinds[ij[1]])) for ij, _ in G.multiplicity)
    return MultiGraph(G.degrees, G.multiplicity, kinds, ek)
