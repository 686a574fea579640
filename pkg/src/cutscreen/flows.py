"""Admittance-free construction of a valid branch-flow solution.

Supply at generator buses is matched to demand at load buses by repeatedly
routing along the fewest-hop path that still has spare capacity. Any flow
built this way conserves power at every bus and respects every rating, and
every such flow carries the same net transfer across any bipartition of the
buses, so it can stand in for a DC solution when screening cut-sets.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .network import BALANCE_TOL, Network, is_connected
from .paths import EPS, shortest_path



class InfeasibleFlowError(RuntimeError):
    """Demand cannot be met without overloading some branch."""


@dataclass(frozen=True)
class FlowState:
    """Signed MW per branch id, positive in the branch's from->to orientation."""

    flows: tuple[float, ...]

    def __getitem__(self, branch_id: int) -> float:
        return self.flows[branch_id]

    def __len__(self) -> int:
        return len(self.flows)

    def replace(self, branch_id: int, value: float) -> "FlowState":
        flows = list(self.flows)
        flows[branch_id] = value
        return FlowState(tuple(flows))

    def to_tsv(self, net: Network) -> str:
        return "".join(
            f"flow {br.id} {br.from_bus} {br.to_bus} {self.flows[br.id]!r}\n" for br in net.branches
        )

    @classmethod
    def from_tsv(cls, text: str) -> "FlowState":
        rows = []
        for line in text.splitlines():
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            if tok[0] != "flow" or len(tok) != 5:
                raise ValueError(f"bad flow record {line!r}")
            rows.append((int(tok[1]), float(tok[4])))
        rows.sort()
        if [k for k, _ in rows] != list(range(len(rows))):
            raise ValueError("flow records must cover branch ids 0..M-1 exactly once")
        return cls(tuple(v for _, v in rows))


@dataclass(frozen=True)
class Route:
    """One scripted routing step.

    ``amount`` caps the MW moved (``None``: as much as supply, demand and the
    path allow); ``path`` fixes the bus sequence instead of searching.
    """

    source: int
    sink: int
    amount: float | None = None
    path: tuple[int, ...] | None = None


@dataclass(frozen=True)
class RoutingPolicy:
    """How source/sink pairs are visited while building a flow.

    ``order`` is ``"ascending"`` (bus id order) or ``"random"`` (shuffled by
    ``seed``). ``routes`` are executed first, verbatim; whatever supply and
    demand remain are then paired by ``order``.
    """

    order: str = "ascending"
    seed: int | None = None
    routes: tuple[Route, ...] = field(default_factory=tuple)

    @classmethod
    def random(cls, seed: int) -> "RoutingPolicy":
        return cls("random", seed)

    @classmethod
    def scripted(cls, *routes: Route) -> "RoutingPolicy":
        return cls(routes=tuple(routes))


class _Builder:
    def __init__(self, net: Network):
        self.net = net
        self.ids = net.bus_ids
        self.idx = net.index
        self.adj = net.adjacency
        self.rating = [br.rating for br in net.branches]
        self.flow = [0.0] * len(net.branches)
        self.fwd = list(self.rating)
        self.bwd = list(self.rating)
        self.gfwd = list(self.rating)
        self.gbwd = list(self.rating)
        self.reach_from: dict = {}
        self.reach_to: dict = {}
        self.remaining = [0.0] * len(self.ids)
        for bus in net.buses:
            self.remaining[self.idx[bus.id]] = bus.injection

    def spare(self, k: int, d: int) -> float:
        return self.rating[k] - self.flow[k] * d

    def _refresh(self, k: int) -> None:
        r, f = self.rating[k], self.flow[k]
        self.fwd[k], self.bwd[k] = r - f, r + f
        # greedy arcs never push against existing flow
        self.gfwd[k] = r - f if f >= -EPS else 0.0
        self.gbwd[k] = r + f if f <= EPS else 0.0

    def bfs(self, s: int, t: int, cancel: bool):
        if cancel:
            return shortest_path(self.adj, self.fwd, self.bwd, s, t)
        return shortest_path(self.adj, self.gfwd, self.gbwd, s, t)

    def arcs_along(self, path: tuple[int, ...]):
        arcs = []
        for a, b in zip(path, path[1:]):
            ia, ib = self.idx[a], self.idx[b]
            hits = [(k, d) for v, k, d in self.adj[ia] if v == ib]
            if not hits:
                raise ValueError(f"no branch between {a} and {b}")
            arcs.append(max(hits, key=lambda kd: self.spare(*kd)))
        return arcs

    def push(self, s: int, t: int, arcs, cap: float = math.inf) -> float:
        amount = min(self.remaining[s], -self.remaining[t], cap)
        for k, d in arcs:
            amount = min(amount, self.spare(k, d))
        if amount <= EPS:
            return 0.0
        for k, d in arcs:
            self.flow[k] += d * amount
            self._refresh(k)
        self.remaining[s] -= amount
        self.remaining[t] += amount
        return amount

    def serve_source(self, s: int, sinks: list[int], cancel: bool) -> bool:
        """Serve sinks in order from source ``s``; True if any flow moved."""
        moved = False
        # cancelling passes can reopen paths, so their mask lives until the next push
        reached = None
        for t in sinks:
            while self.remaining[s] > EPS and self.remaining[t] < -EPS:
                if cancel:
                    if reached is not None and not reached[t]:
                        break
                elif self.blocked(s, t):
                    break
                arcs, from_s, to_t = self.bfs(s, t, cancel)
                if arcs is None:
                    if cancel:
                        reached = from_s
                    else:
                        if from_s is not None:
                            self.reach_from[s] = from_s
                        if to_t is not None:
                            self.reach_to[t] = to_t
                    break
                if self.push(s, t, arcs) == 0.0:
                    break
                moved = True
                reached = None
            if self.remaining[s] <= EPS:
                break
        return moved

    def blocked(self, s: int, t: int) -> bool:
        # greedy pushes only ever shrink the usable arc set, so a recorded
        # "unreachable" stays true for the rest of the greedy pass
        m = self.reach_from.get(s)
        if m is not None and not m[t]:
            return True
        m = self.reach_to.get(t)
        return m is not None and not m[s]

    def unserved(self) -> float:
        return math.fsum(-r for r in self.remaining if r < -EPS)


def build_flow(net: Network, policy: RoutingPolicy | None = None) -> FlowState:
    """Route every MW of supply to demand without exceeding any rating.

    Pairs are served greedily along shortest paths that never push against
    existing flow. If demand is left over, passes that may cancel existing
    flow (reverse residual arcs) are repeated until no pair can be
    augmented; that final state is a maximum flow, so leftover demand then
    means no valid flow exists.
    """
    if policy is None:
        policy = RoutingPolicy()
    if abs(net.total_injection) > BALANCE_TOL:
        raise ValueError(f"network is unbalanced by {net.total_injection:.6f} MW")
    if not is_connected(net):
        raise ValueError("network is not connected")

    b = _Builder(net)
    idx = b.idx
    for r in policy.routes:
        s, t = idx[r.source], idx[r.sink]
        cap = math.inf if r.amount is None else r.amount
        if r.path is not None:
            if (r.path[0], r.path[-1]) != (r.source, r.sink):
                raise ValueError(f"route path {r.path} does not join {r.source} to {r.sink}")
            b.push(s, t, b.arcs_along(r.path), cap)
        else:
            arcs, _, _ = b.bfs(s, t, cancel=False)
            if arcs is not None:
                b.push(s, t, arcs, cap)

    sources = [i for i in range(len(b.ids)) if b.remaining[i] > EPS]
    sinks = [i for i in range(len(b.ids)) if b.remaining[i] < -EPS]
    if policy.order == "random":
        rng = random.Random(policy.seed)
        rng.shuffle(sources)
        rng.shuffle(sinks)
    elif policy.order != "ascending":
        raise ValueError(f"unknown pairing order {policy.order!r}")

    for s in sources:
        b.serve_source(s, sinks, cancel=False)

    while b.unserved() > EPS:
        progress = False
        for s in sources:
            progress |= b.serve_source(s, sinks, cancel=True)
        if not progress:
            raise InfeasibleFlowError(
                f"{b.unserved():.6f} MW of demand cannot be served within branch ratings"
            )

    return FlowState(tuple(b.flow))


@dataclass(frozen=True)
class Violation:
    kind: str  # "conservation" or "capacity"
    element: int  # bus id or branch id
    magnitude: float

    def __str__(self) -> str:
        what = "bus" if self.kind == "conservation" else "branch"
        return f"{self.kind} violation at {what} {self.element}: {self.magnitude:.6g} MW"


def bus_balance(net: Network, fs: FlowState) -> dict[int, float]:
    """Injection plus inflow minus outflow at every bus."""
    out = dict(net.injections)
    for br in net.branches:
        f = fs.flows[br.id]
        out[br.from_bus] -= f
        out[br.to_bus] += f
    return out


def verify_flow(net: Network, fs: FlowState, tol: float = EPS) -> list[Violation]:
    if len(fs.flows) != len(net.branches):
        raise ValueError(f"flow state has {len(fs.flows)} entries for {len(net.branches)} branches")
    found = [
        Violation("conservation", bus, abs(r))
        for bus, r in sorted(bus_balance(net, fs).items())
        if abs(r) > tol
    ]
    for br in net.branches:
        excess = abs(fs.flows[br.id]) - br.rating
        if excess > tol:
            found.append(Violation("capacity", br.id, excess))
    return found
