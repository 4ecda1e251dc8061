"""Golden instance corpus for the virtual-nodes dominance check.

A corpus file holds blocks separated by blank lines::

    instance I=0,2 b=2
    X 0:1/4 1:3/4
    Y 0:1/2 1:1/2
    4 3
    0 1
    1 2
    2 3

The header names the informed set I and the virtual degree b, the X and Y
lines are the exact laws of the new-informed count on G and on the
(I, b)-modified graph, and the rest is the graph's edge list.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .coupling import (
    OutcomeDistribution,
    check_dominance,
    exact_modified_push_distribution,
    exact_push_distribution,
    format_distribution,
    parse_distribution,
)
from .dyngraph import GraphSnapshot, RngStream, sample_gnp

CORPUS_DIR = Path(__file__).with_name("corpus")


@dataclass
class CorpusInstance:
    name: str
    graph: GraphSnapshot
    informed: tuple[int, ...]
    b: int
    x: OutcomeDistribution
    y: OutcomeDistribution

    def label(self) -> str:
        return f"{self.name} I={','.join(map(str, self.informed))} b={self.b}"

    def to_text(self) -> str:
        head = f"instance I={','.join(map(str, self.informed))} b={self.b}"
        return "\n".join(
            [head, "X " + format_distribution(self.x), "Y " + format_distribution(self.y), self.graph.to_edgelist().rstrip("\n")]
        )


class CorpusFormatError(ValueError):
    pass


def _named_graphs() -> dict[str, GraphSnapshot]:
    def path(n):
        return GraphSnapshot.from_edges(n, [(i, i + 1) for i in range(n - 1)])

    def cycle(n):
        return GraphSnapshot.from_edges(n, [(i, (i + 1) % n) for i in range(n)])

    graphs = {
        "path4": path(4),
        "path5": path(5),
        "star5": GraphSnapshot.from_edges(5, [(0, i) for i in range(1, 5)]),
        "cycle4": cycle(4),
        "cycle5": cycle(5),
        "complete3": GraphSnapshot.complete(3),
        "complete4": GraphSnapshot.complete(4),
        "complete5": GraphSnapshot.complete(5),
        # triangle {0,1,2} and edge {3,4} joined by the bridge 2-3
        "bridge5": GraphSnapshot.from_edges(5, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4)]),
    }
    for n, seed in ((4, 11), (4, 12), (5, 21), (5, 22)):
        graphs[f"random{n}_s{seed}"] = sample_gnp(n, 0.5, RngStream(seed))
    return graphs


def build_instances(name: str, g: GraphSnapshot) -> list[CorpusInstance]:
    out = []
    nodes = range(g.n)
    for size in range(1, g.n + 1):
        for informed in itertools.combinations(nodes, size):
            for b in range(1, g.n + 1):
                x = exact_push_distribution(g, informed)
                y = exact_modified_push_distribution(g, informed, b)
                out.append(CorpusInstance(name, g, informed, b, x, y))
    return out


def write_corpus(directory: Path = CORPUS_DIR) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, g in _named_graphs().items():
        blocks = [inst.to_text() for inst in build_instances(name, g)]
        path = directory / f"{name}.txt"
        path.write_text(f"# graph {name}\n\n" + "\n\n".join(blocks) + "\n")
        paths.append(path)
    return paths


def read_corpus_file(path: Path) -> Iterator[CorpusInstance]:
    path = Path(path)
    lines = [ln.rstrip() for ln in path.read_text().splitlines()]
    blocks: list[list[tuple[int, str]]] = [[]]
    for no, ln in enumerate(lines, 1):
        if ln.startswith("#"):
            continue
        if not ln:
            if blocks[-1]:
                blocks.append([])
            continue
        blocks[-1].append((no, ln))
    for block in blocks:
        if not block:
            continue
        line_no = block[0][0]
        try:
            head, xline, yline, *edges = [ln for _, ln in block]
            fields = dict(tok.split("=", 1) for tok in head.split()[1:])
            if not head.startswith("instance ") or not xline.startswith("X ") or not yline.startswith("Y "):
                raise ValueError("expected 'instance', 'X' and 'Y' lines")
            informed = tuple(int(v) for v in fields["I"].split(","))
            b = int(fields["b"])
            g = GraphSnapshot.from_edgelist("\n".join(edges) + "\n")
            yield CorpusInstance(path.stem, g, informed, b, parse_distribution(xline[2:]), parse_distribution(yline[2:]))
        except (ValueError, KeyError) as exc:
            raise CorpusFormatError(f"{path}:{line_no}: {exc}") from exc


def corpus_files(directory: Path | str = CORPUS_DIR) -> list[Path]:
    directory = Path(directory)
    if directory.is_file():
        return [directory]
    return sorted(directory.glob("*.txt"))


@dataclass
class InstanceVerdict:
    file: Path
    instance: CorpusInstance
    ok: bool
    reason: str = ""


def verify_instance(path: Path, inst: CorpusInstance) -> InstanceVerdict:
    """Recompute both laws, compare with the golden lines, then check dominance."""
    x = exact_push_distribution(inst.graph, inst.informed)
    y = exact_modified_push_distribution(inst.graph, inst.informed, inst.b)
    reasons = []
    if format_distribution(x) != format_distribution(inst.x):
        reasons.append("X differs from recomputed law")
    if format_distribution(y) != format_distribution(inst.y):
        reasons.append("Y differs from recomputed law")
    if not check_dominance(inst.x, inst.y):
        reasons.append("golden X does not dominate golden Y")
    return InstanceVerdict(path, inst, not reasons, "; ".join(reasons))


def verify_corpus(directory: Path | str = CORPUS_DIR) -> list[InstanceVerdict]:
    out = []
    for path in corpus_files(directory):
        for inst in read_corpus_file(path):
            out.append(verify_instance(path, inst))
    return out
