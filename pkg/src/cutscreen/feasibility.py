"""Outage feasibility test and saturated cut-set extraction.

For an outaged branch carrying ``f`` MW from ``v_from`` to ``v_to``, the
test tries to re-route those ``f`` MW through the spare capacity of the
remaining branches, one shortest augmenting path at a time. Whatever cannot
be re-routed is the margin by which the tightest cut-set containing the
branch is overloaded; that cut is read off from the buses still reachable
from ``v_from`` once no augmenting path is left.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .flows import EPS, FlowState, verify_flow
from .network import Network
from .paths import shortest_path


class SaturationError(RuntimeError):
    """Cut extraction requested while an augmenting path still exists."""


@dataclass
class ResidualView:
    """Directed spare capacities with one branch removed.

    ``forward[k]`` is the MW branch ``k`` can still take from ``from_bus`` to
    ``to_bus``; ``backward[k]`` the same in the opposite direction. The
    removed branch has both set to zero and is never traversed.
    """

    forward: list[float]
    backward: list[float]
    removed_branch: int
    origin: int
    terminus: int
    # branches changed by augment(); lets array views start from a shared base
    touched: set[int] = field(default_factory=set)
    base: "_Base | None" = field(default=None, repr=False, compare=False)

    def spare(self, k: int, d: int) -> float:
        return self.forward[k] if d > 0 else self.backward[k]

    def spare_array(self) -> np.ndarray:
        """Spare capacity per directed arc (numbering of ``Network.arc_order``)."""
        m = len(self.forward)
        if self.base is None:
            spare = np.concatenate([self.forward, self.backward])
        else:
            spare = self.base.arcs.copy()
            for k in self.touched:
                spare[k] = self.forward[k]
                spare[m + k] = self.backward[k]
        spare[self.removed_branch] = spare[m + self.removed_branch] = 0.0
        return spare

    def augment(self, arcs, amount: float) -> None:
        fwd, bwd = self.forward, self.backward
        self.touched.update(k for k, _ in arcs)
        for k, d in arcs:
            if d > 0:
                fwd[k] -= amount
                bwd[k] += amount
            else:
                bwd[k] -= amount
                fwd[k] += amount


@dataclass(frozen=True)
class CutSet:
    branches: tuple[int, ...]
    side_c1: frozenset[int]
    transfer: float
    capacity_post_outage: float

    @property
    def margin(self) -> float:
        return self.capacity_post_outage - self.transfer

    def labels(self, net: Network) -> list[str]:
        return [net.branches[k].label for k in self.branches]

    def to_json(self, net: Network) -> dict:
        return {
            "branches": [
                {"id": k, "from": net.branches[k].from_bus, "to": net.branches[k].to_bus}
                for k in self.branches
            ],
            "side_c1": sorted(self.side_c1),
            "transfer_mw": _round(self.transfer),
            "capacity_post_outage_mw": _round(self.capacity_post_outage),
        }


@dataclass(frozen=True)
class FtReport:
    outaged_branch: int
    flow: float
    rerouted: float
    critical_cut: CutSet | None = None

    @property
    def margin(self) -> float:
        return self.rerouted - self.flow

    @property
    def saturated(self) -> bool:
        return self.critical_cut is not None

    def to_json(self, net: Network) -> dict:
        br = net.branches[self.outaged_branch]
        return {
            "branch": {"id": br.id, "from": br.from_bus, "to": br.to_bus},
            "flow_mw": _round(self.flow),
            "rerouted_mw": _round(self.rerouted),
            "margin_mw": _round(self.margin),
            "saturated": self.saturated,
            "critical_cut": None if self.critical_cut is None else self.critical_cut.to_json(net),
        }


def _round(x: float) -> float:
    # stable JSON: drop float noise below the saturation threshold
    return round(x, 6) + 0.0


def cut_transfer(net: Network, fs: FlowState, side_c1) -> float:
    """Net MW flowing from ``side_c1`` to the remaining buses."""
    c1 = set(side_c1)
    unknown = c1 - set(net.bus_ids)
    if unknown:
        raise KeyError(f"unknown bus ids in cut side: {sorted(unknown)}")
    if not c1 or len(c1) == len(net.buses):
        raise ValueError("cut side must be a nonempty proper subset of the buses")
    total = []
    for br in net.branches:
        a, b = br.from_bus in c1, br.to_bus in c1
        if a and not b:
            total.append(fs.flows[br.id])
        elif b and not a:
            total.append(-fs.flows[br.id])
    return math.fsum(total)


def evaluate_cut(net: Network, fs: FlowState, side_c1, outage: int) -> CutSet:
    """Transfer and post-outage capacity of the cut around ``side_c1``."""
    c1 = frozenset(side_c1)
    branches = tuple(
        br.id for br in net.branches if (br.from_bus in c1) != (br.to_bus in c1)
    )
    if outage not in branches:
        raise ValueError(f"branch {outage} does not cross the given cut")
    capacity = math.fsum(net.branches[k].rating for k in branches if k != outage)
    return CutSet(branches, c1, cut_transfer(net, fs, c1), capacity)


class _Base:
    """Pre-outage residuals of one flow state, shared across outages.

    Also caches what a sweep over many outages can reuse: the bridges of
    the network and, per strongly connected component of the pre-outage
    residual graph, the set of buses it reaches.
    """

    def __init__(self, net: Network, fs: FlowState):
        self.net = net
        self.forward = [br.rating - f for br, f in zip(net.branches, fs.flows)]
        self.backward = [br.rating + f for br, f in zip(net.branches, fs.flows)]
        self.arcs = np.concatenate([self.forward, self.backward])
        self._bridges: dict[int, int] | None = None
        self._tin = self._tout = None
        self._scc = None
        self._reach: dict[int, np.ndarray] = {}

    def bridge_child(self, k: int) -> int | None:
        """Dense index of the far-side DFS child if branch ``k`` is a bridge."""
        if self._bridges is None:
            self._bridges, self._tin, self._tout = bridges(self.net)
        return self._bridges.get(k)

    def subtree(self, c: int) -> np.ndarray:
        return (self._tin >= self._tin[c]) & (self._tin <= self._tout[c])

    def reach(self, s: int) -> np.ndarray:
        """Buses reachable from ``s`` before any outage."""
        if self._scc is None:
            self._scc = connected_components(_residual_graph(self.net, self.arcs), directed=True, connection="strong")[1]
        label = int(self._scc[s])
        if label not in self._reach:
            self._reach[label] = _bfs_mask(_residual_graph(self.net, self.arcs), s)
        return self._reach[label]


def bridges(net: Network):
    """Branches whose removal disconnects the network.

    Returns ``(bridge -> dense index of its DFS child, tin, tout)``; the
    child's subtree, ``tin`` in ``[tin[c], tout[c]]``, is the side cut off.
    Parallel branches are never bridges.
    """
    adj = net.adjacency
    n = len(adj)
    tin = np.full(n, -1, dtype=np.int64)
    tout = np.zeros(n, dtype=np.int64)
    low = [0] * n
    found: dict[int, int] = {}
    clock = 0
    for root in range(n):
        if tin[root] >= 0:
            continue
        tin[root] = low[root] = clock
        clock += 1
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            u, via, it = stack[-1]
            for v, k, _ in it:
                if k == via:
                    continue
                if tin[v] < 0:
                    tin[v] = low[v] = clock
                    clock += 1
                    stack.append((v, k, iter(adj[v])))
                    break
                low[u] = min(low[u], int(tin[v]))
            else:
                stack.pop()
                tout[u] = clock - 1
                if stack:
                    p = stack[-1][0]
                    low[p] = min(low[p], low[u])
                    if low[u] > tin[p]:
                        found[via] = u
    return found, tin, tout


def _base_residuals(net: Network, fs: FlowState) -> _Base:
    return _Base(net, fs)


def make_residual(net: Network, fs: FlowState, outage: int, _base=None) -> ResidualView:
    """Spare capacities for every branch but ``outage``.

    The origin/terminus are the outaged branch's ends, oriented along its
    pre-outage flow (``from_bus`` first when the flow is zero).
    """
    if not 0 <= outage < len(net.branches):
        raise KeyError(f"unknown branch id {outage}")
    base = _base if _base is not None else _Base(net, fs)
    fwd, bwd = list(base.forward), list(base.backward)
    fwd[outage] = bwd[outage] = 0.0
    br = net.branches[outage]
    if fs.flows[outage] >= 0:
        origin, terminus = br.from_bus, br.to_bus
    else:
        origin, terminus = br.to_bus, br.from_bus
    return ResidualView(fwd, bwd, outage, origin, terminus, base=base)


def _residual_graph(net: Network, spare: np.ndarray) -> sp.csr_matrix:
    # csgraph treats stored zeros as edges, so dead arcs are left out
    order, tails, heads = net.arc_order
    live = spare[order] > EPS
    n = len(net.bus_ids)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(tails[live], minlength=n), out=indptr[1:])
    indices = heads[live]
    return sp.csr_matrix((np.ones(len(indices), dtype=np.int8), indices, indptr), shape=(n, n))


def _bfs_mask(graph: sp.csr_matrix, s: int) -> np.ndarray:
    seen = np.zeros(graph.shape[0], dtype=bool)
    seen[breadth_first_order(graph, s, directed=True, return_predecessors=False)] = True
    return seen


def _reach(net: Network, rv: ResidualView, s: int) -> np.ndarray:
    """Boolean mask of buses reachable from ``s`` through arcs with spare capacity."""
    return _bfs_mask(_residual_graph(net, rv.spare_array()), s)


def _cut_from_side(net: Network, fs: FlowState, seen: np.ndarray, outage: int) -> CutSet:
    frm, to = net.endpoints
    in_from, in_to = seen[frm], seen[to]
    crossing = np.flatnonzero(in_from != in_to)
    branches = crossing.tolist()
    flows = fs.flows
    leaving = in_from[crossing].tolist()
    transfer = math.fsum(flows[k] if out else -flows[k] for k, out in zip(branches, leaving))
    nb = net.branches
    capacity = math.fsum(nb[k].rating for k in branches if k != outage)
    return CutSet(tuple(branches), frozenset(net.bus_id_array[seen].tolist()), transfer, capacity)


def extract_cut(rv: ResidualView, net: Network, fs: FlowState) -> CutSet:
    """Cut between the buses reachable from the origin in ``rv`` and the rest.

    Transfer is measured on the original flow state ``fs``; the removed
    branch is part of the cut but not of its post-outage capacity.
    """
    idx = net.index
    s, t = idx[rv.origin], idx[rv.terminus]
    seen = _reach(net, rv, s)
    if seen[t]:
        raise SaturationError("an augmenting path to the terminus still exists")
    return _cut_from_side(net, fs, seen, rv.removed_branch)


def feasibility_test(net: Network, fs: FlowState, outage: int, check: bool = True, _base=None) -> FtReport:
    """Try to re-route the outaged branch's flow; report the shortfall.

    Augmentation stops once the full pre-outage flow is re-routed, so the
    margin lies in ``[-flow, 0]``. A negative margin comes with the cut-set
    that is saturated by that margin.
    """
    if not 0 <= outage < len(net.branches):
        raise KeyError(f"unknown branch id {outage}")
    if check:
        bad = verify_flow(net, fs)
        if bad:
            raise ValueError(f"invalid flow state: {bad[0]}")
    rv = make_residual(net, fs, outage, _base)
    target = abs(fs.flows[outage])
    adj = net.adjacency
    s, t = net.index[rv.origin], net.index[rv.terminus]
    if _base is not None and target > EPS:
        child = _base.bridge_child(outage)
        if child is not None:
            # nothing can be re-routed around a bridge; a path that crosses
            # it cannot add buses on the origin side, so the pre-outage reach
            # clipped to that side is the post-outage reach
            side = _base.subtree(child)
            if not side[s]:
                side = ~side
            return FtReport(outage, target, 0.0, _cut_from_side(net, fs, _base.reach(s) & side, outage))
    rerouted = 0.0
    while target - rerouted > EPS:
        arcs, seen, _ = shortest_path(adj, rv.forward, rv.backward, s, t, outage)
        if arcs is None:
            if seen is None:
                seen = _reach(net, rv, s)
            return FtReport(outage, target, rerouted, _cut_from_side(net, fs, seen, outage))
        amount = min(target - rerouted, min(rv.spare(k, d) for k, d in arcs))
        rv.augment(arcs, amount)
        rerouted += amount
    return FtReport(outage, target, target)


def _screen_chunk(args):
    net, fs, ids = args
    base = _base_residuals(net, fs)
    return [feasibility_test(net, fs, k, check=False, _base=base) for k in ids]


def screen_n_minus_1(net: Network, fs: FlowState, workers: int | None = 1) -> list[FtReport]:
    """Run the feasibility test for every branch, tightest margin first.

    ``workers`` > 1 spreads branches over processes; ``None`` uses every CPU.
    Output order does not depend on the worker count.
    """
    bad = verify_flow(net, fs)
    if bad:
        raise ValueError(f"invalid flow state: {bad[0]}")
    ids = list(range(len(net.branches)))
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(ids) < 2 * workers:
        reports = _screen_chunk((net, fs, ids))
    else:
        chunks = [ids[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            reports = [r for part in pool.map(_screen_chunk, [(net, fs, c) for c in chunks]) for r in part]
    reports.sort(key=lambda r: (_round(r.margin), r.outaged_branch))
    return reports


# --------------------------------------------------------------------------
# exhaustive oracle

MAX_BRUTE_FORCE_BUSES = 20


def brute_force_margin(net: Network, fs: FlowState, outage: int) -> tuple[float, CutSet]:
    """Smallest post-outage margin over every bipartition splitting the branch.

    Enumerates all ``2**(n-2)`` vertex bipartitions that put the outaged
    branch's origin and terminus on opposite sides. Ties go to the
    lexicographically smallest origin side.
    """
    n = len(net.buses)
    if n > MAX_BRUTE_FORCE_BUSES:
        raise ValueError(f"brute force limited to {MAX_BRUTE_FORCE_BUSES} buses, got {n}")
    if not 0 <= outage < len(net.branches):
        raise KeyError(f"unknown branch id {outage}")
    ids = net.bus_ids
    idx = net.index
    br = net.branches[outage]
    origin, terminus = (br.from_bus, br.to_bus) if fs.flows[outage] >= 0 else (br.to_bus, br.from_bus)
    o, t = idx[origin], idx[terminus]
    free = [i for i in range(n) if i not in (o, t)]

    sides = np.zeros((2 ** len(free), n), dtype=np.int8)
    for row, bits in enumerate(itertools.product((0, 1), repeat=len(free))):
        sides[row, free] = bits
    sides[:, o] = 1

    frm = np.array([idx[b.from_bus] for b in net.branches])
    to = np.array([idx[b.to_bus] for b in net.branches])
    rating = np.array([b.rating for b in net.branches], dtype=float)
    flows = np.asarray(fs.flows, dtype=float)
    # +1: branch leaves C1 along its orientation, -1: enters C1, 0: internal
    direction = sides[:, frm] - sides[:, to]
    crossing = direction != 0
    transfer = direction @ flows
    others = np.ones(len(rating), dtype=bool)
    others[outage] = False
    with np.errstate(invalid="ignore"):
        capacity = np.where(crossing[:, others], rating[others], 0.0).sum(axis=1)
    margins = capacity - transfer

    best = margins.min()
    tied = np.flatnonzero(margins <= best + 1e-9)
    row = min(tied, key=lambda r: sorted(ids[i] for i in np.flatnonzero(sides[r])))
    cut = evaluate_cut(net, fs, {ids[i] for i in np.flatnonzero(sides[row])}, outage)
    return cut.margin, cut
