"""Graph stability number via the Motzkin-Straus quartic on the sphere.

S(G)^{-1} = min_{||x||=1} sum_i x_i^4 + 2 sum_{(i,j) in E} x_i^2 x_j^2,
so the reported stability number is round(1 / best objective).  Includes a
DIMACS parser and deterministic generators for the benchmark families.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..errors import ContractViolationError, GraphParseError
from .base import Problem


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph with 1-based vertices."""

    num_vertices: int
    edges: frozenset  # of (u, v) tuples with u < v

    def __post_init__(self):
        object.__setattr__(
            self,
            "edges",
            frozenset((min(u, v), max(u, v)) for u, v in self.edges),
        )
        for u, v in self.edges:
            if u == v:
                raise GraphParseError(f"self-loop at vertex {u}")
            if not (1 <= u <= self.num_vertices and 1 <= v <= self.num_vertices):
                raise GraphParseError(f"edge ({u}, {v}) out of range")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.num_vertices, self.num_vertices))
        for u, v in self.edges:
            A[u - 1, v - 1] = 1.0
            A[v - 1, u - 1] = 1.0
        return A

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1).astype(int)


def parse_dimacs(source) -> Graph:
    """Parse ASCII DIMACS: 'c' comments, one 'p edge V E' line, 'e u v' lines.

    Duplicate edges (in either orientation) are merged; self-loops, vertices
    out of range, malformed lines, and a missing problem line all raise
    GraphParseError naming the offending 1-based line.
    """
    if isinstance(source, bytes):
        source = source.decode("ascii")
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = [ln.decode("ascii") if isinstance(ln, bytes) else ln for ln in source]

    num_vertices = None
    edges = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        parts = line.split()
        if parts[0] == "p":
            if num_vertices is not None:
                raise GraphParseError("duplicate problem line", lineno)
            if len(parts) != 4 or parts[1] not in ("edge", "col"):
                raise GraphParseError(f"malformed problem line {line!r}", lineno)
            try:
                num_vertices = int(parts[2])
                int(parts[3])
            except ValueError:
                raise GraphParseError(f"malformed problem line {line!r}", lineno)
            if num_vertices < 1:
                raise GraphParseError("vertex count must be positive", lineno)
        elif parts[0] == "e":
            if num_vertices is None:
                raise GraphParseError("edge before problem line", lineno)
            if len(parts) != 3:
                raise GraphParseError(f"malformed edge line {line!r}", lineno)
            try:
                u, v = int(parts[1]), int(parts[2])
            except ValueError:
                raise GraphParseError(f"malformed edge line {line!r}", lineno)
            if u == v:
                raise GraphParseError(f"self-loop at vertex {u}", lineno)
            if not (1 <= u <= num_vertices and 1 <= v <= num_vertices):
                raise GraphParseError(f"edge ({u}, {v}) out of range", lineno)
            edges.add((min(u, v), max(u, v)))
        else:
            raise GraphParseError(f"unrecognized line {line!r}", lineno)
    if num_vertices is None:
        raise GraphParseError("missing problem line")
    return Graph(num_vertices, frozenset(edges))


def to_dimacs(graph: Graph) -> str:
    lines = [f"p edge {graph.num_vertices} {graph.num_edges}"]
    for u, v in sorted(graph.edges):
        lines.append(f"e {u} {v}")
    return "\n".join(lines) + "\n"


def cycle_graph(m: int) -> Graph:
    edges = {(i, i + 1) for i in range(1, m)} | {(1, m)}
    return Graph(m, frozenset(edges))


def complete_graph(m: int) -> Graph:
    return Graph(m, frozenset((u, v) for u, v in combinations(range(1, m + 1), 2)))


def empty_graph(m: int) -> Graph:
    return Graph(m, frozenset())


def petersen_graph() -> Graph:
    # Outer 5-cycle 1..5, inner pentagram 6..10, spokes i -> i+5.
    edges = {(i, i % 5 + 1) for i in range(1, 6)}
    edges |= {(i, i + 5) for i in range(1, 6)}
    inner = [6, 8, 10, 7, 9]
    edges |= {
        (min(inner[i], inner[(i + 1) % 5]), max(inner[i], inner[(i + 1) % 5]))
        for i in range(5)
    }
    return Graph(10, frozenset(edges))


def hamming_graph(d: int, threshold: int) -> Graph:
    """Vertices are binary strings of length d (1-based as value + 1);
    edges join strings at Hamming distance 0 < dist < threshold."""
    m = 1 << d
    edges = set()
    for a in range(m):
        for b in range(a + 1, m):
            if bin(a ^ b).count("1") < threshold:
                edges.add((a + 1, b + 1))
    return Graph(m, frozenset(edges))


def graph_generators(kind: str, **params) -> Graph:
    kind = kind.lower()
    if kind == "cycle":
        return cycle_graph(int(params["m"]))
    if kind == "complete":
        return complete_graph(int(params["m"]))
    if kind == "empty":
        return empty_graph(int(params["m"]))
    if kind == "petersen":
        return petersen_graph()
    if kind == "hamming":
        return hamming_graph(int(params["d"]), int(params["threshold"]))
    raise ValueError(f"unknown graph kind {kind!r}")


def stability_problem(g: Graph) -> Problem:
    """Single-block (|V|, 1) Motzkin-Straus objective."""
    A = g.adjacency()
    m = g.num_vertices

    def value(blocks):
        x2 = blocks[0].ravel() ** 2
        return float(np.sum(x2 * x2) + x2 @ (A @ x2))

    def gradient(blocks):
        x = blocks[0].ravel()
        x2 = x * x
        g_ = 4.0 * x2 * x + 4.0 * x * (A @ x2)
        return [g_.reshape(m, 1)]

    return Problem(
        name=f"stability({g.num_vertices}v,{g.num_edges}e)",
        block_dims=[(m, 1)],
        value=value,
        euclidean_gradient=gradient,
    )


def stability_estimate(best_objective: float) -> int:
    """round(1 / best objective), the integer reported for S(G)."""
    if not best_objective > 0:
        raise ContractViolationError("objective must be positive")
    return int(round(1.0 / best_objective))
