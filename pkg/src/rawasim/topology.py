"""Overlay topology construction: honest graph plus adversary wiring.

Honest nodes each dial a fixed number of peers they are not yet connected
to, which yields exactly ``n * out_links`` undirected edges, minimum degree
``out_links`` and mean degree ``2 * out_links``. Adversaries are wired on
top: a single fully-connected spy, or a team whose links partition the
honest population so every honest node gets exactly one adversary neighbor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import PeerId
from .netsim import RngStream

ADVERSARY_NONE = "none"
ADVERSARY_FSE = "fse"
ADVERSARY_WFE = "wfe"
ADVERSARY_SAWFE = "sawfe"


@dataclass
class Topology:
    honest: list[PeerId]
    adversaries: list[PeerId] = field(default_factory=list)
    edges: set[tuple[PeerId, PeerId]] = field(default_factory=set)

    def add_edge(self, a: PeerId, b: PeerId) -> None:
        if a == b:
            raise ValueError("self-loop")
        self.edges.add((min(a, b), max(a, b)))

    def degree(self, node: PeerId) -> int:
        return sum(1 for e in self.edges if node in e)

    def neighbors(self, node: PeerId) -> list[PeerId]:
        out = [b if a == node else a for a, b in self.edges if node in (a, b)]
        return sorted(out)

    @property
    def all_nodes(self) -> list[PeerId]:
        return sorted(self.honest + self.adversaries)


def build_honest_topology(n_honest: int, out_links: int, rng: RngStream) -> Topology:
    """Every node picks `out_links` distinct targets it is not yet connected
    to, uniformly at random; edges are undirected."""
    if n_honest <= out_links:
        raise ValueError("need n_honest > out_links")
    topo = Topology(honest=list(range(n_honest)))
    connected: dict[PeerId, set[PeerId]] = {n: set() for n in topo.honest}
    for node in topo.honest:
        candidates = [p for p in topo.honest if p != node and p not in connected[node]]
        picks = rng.sample(candidates, min(out_links, len(candidates)))
        for target in picks:
            topo.add_edge(node, target)
            connected[node].add(target)
            connected[target].add(node)
    return topo


def wire_adversary(topo: Topology, kind: str, rng: RngStream) -> Topology:
    """Extend an honest-only topology with adversary nodes.

    fse: one node linked to every honest node. wfe/sawfe: one node per four
    honest nodes, links assigned by a random partition of the honest set.
    """
    if topo.adversaries:
        raise ValueError("topology already has adversaries")
    if kind == ADVERSARY_NONE:
        return topo
    next_id = len(topo.honest)
    if kind == ADVERSARY_FSE:
        spy = next_id
        topo.adversaries.append(spy)
        for node in topo.honest:
            topo.add_edge(spy, node)
        return topo
    if kind in (ADVERSARY_WFE, ADVERSARY_SAWFE):
        if len(topo.honest) % 4 != 0:
            raise ValueError("wfe wiring needs honest count divisible by 4")
        n_adv = len(topo.honest) // 4
        shuffled = list(topo.honest)
        rng.shuffle(shuffled)
        for i in range(n_adv):
            adv = next_id + i
            topo.adversaries.append(adv)
            for node in shuffled[4 * i:4 * i + 4]:
                topo.add_edge(adv, node)
        return topo
    raise ValueError(f"unknown adversary kind: {kind!r}")
