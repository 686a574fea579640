"""DC power flow: the admittance-aware reference for the graph screen.

Solves ``B theta = P`` on the reduced nodal susceptance matrix (reference
row/column removed) with a sparse LU factorisation, and re-solves from
scratch for every contingency.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .flows import EPS, FlowState
from .network import BALANCE_TOL, Network, default_slack_bus


class IslandingError(RuntimeError):
    """The outage splits the network, so no single DC solution exists."""


class MissingSusceptanceError(ValueError):
    pass


@dataclass(frozen=True)
class Overload:
    branch: int
    flow: float
    rating: float

    @property
    def excess(self) -> float:
        return abs(self.flow) - self.rating

    def to_json(self) -> dict:
        return {
            "branch": self.branch,
            "flow_mw": round(self.flow, 6) + 0.0,
            "rating_mw": self.rating,
            "excess_mw": round(self.excess, 6) + 0.0,
        }


class _DcArrays:
    """Incidence data shared by every solve on one network."""

    def __init__(self, net: Network):
        missing = [br.label for br in net.branches if not br.susceptance or br.susceptance <= 0]
        if missing:
            raise MissingSusceptanceError(f"branches without a positive susceptance: {', '.join(missing[:5])}")
        idx = net.index
        self.n = len(idx)
        self.frm = np.array([idx[b.from_bus] for b in net.branches], dtype=np.int64)
        self.to = np.array([idx[b.to_bus] for b in net.branches], dtype=np.int64)
        self.b = np.array([b.susceptance for b in net.branches], dtype=float)
        self.rating = np.array([b.rating for b in net.branches], dtype=float)
        self.p = np.zeros(self.n)
        self._base: tuple[int, np.ndarray] | None = None
        for bus in net.buses:
            self.p[idx[bus.id]] = bus.injection

    def solve(self, ref: int, keep: np.ndarray | None = None) -> np.ndarray:
        """Branch flows (NaN for dropped branches)."""
        frm, to, b = self.frm, self.to, self.b
        if keep is not None:
            frm, to, b = frm[keep], to[keep], b[keep]
        n = self.n
        rows = np.concatenate([frm, to, frm, to])
        cols = np.concatenate([frm, to, to, frm])
        vals = np.concatenate([b, b, -b, -b])
        bbus = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
        red = np.r_[0:ref, ref + 1 : n]
        theta = np.zeros(n)
        if n > 1:
            theta[red] = splu(bbus[red][:, red].tocsc()).solve(self.p[red])
        flows = np.full(len(self.frm), np.nan)
        sel = slice(None) if keep is None else keep
        flows[sel] = b * (theta[frm] - theta[to])
        return flows

    def base(self, ref: int) -> np.ndarray:
        if self._base is None or self._base[0] != ref:
            self._base = (ref, self.solve(ref))
        return self._base[1]

    def islands(self, keep: np.ndarray) -> int:
        g = sp.coo_matrix((np.ones(int(keep.sum())), (self.frm[keep], self.to[keep])), shape=(self.n, self.n))
        return connected_components(g, directed=False)[0]


def _reference(net: Network, reference_bus: int | None) -> int:
    if reference_bus is None:
        pol = net.balance_policy
        reference_bus = pol.slack_bus if pol is not None and pol.slack_bus is not None else default_slack_bus(net)
    try:
        return net.index[reference_bus]
    except KeyError:
        raise KeyError(f"reference bus {reference_bus} not in network") from None


def _check_balanced(net: Network):
    if abs(net.total_injection) > BALANCE_TOL:
        raise ValueError(f"network is unbalanced by {net.total_injection:.6f} MW")


def solve_dc(net: Network, reference_bus: int | None = None) -> FlowState:
    """DC branch flows in MW. Ratings are not enforced."""
    _check_balanced(net)
    arr = _DcArrays(net)
    if arr.islands(np.ones(len(arr.frm), dtype=bool)) > 1:
        raise IslandingError("network is not connected")
    return FlowState(tuple(float(f) for f in arr.solve(_reference(net, reference_bus))))


def _overloads(arr: _DcArrays, flows: np.ndarray) -> list[Overload]:
    with np.errstate(invalid="ignore"):
        over = np.flatnonzero(np.abs(flows) > arr.rating + EPS)
    return [Overload(int(k), float(flows[k]), float(arr.rating[k])) for k in over]


def dc_contingency(net: Network, outage: int, reference_bus: int | None = None, _arrays=None) -> list[Overload]:
    """Remove ``outage``, re-solve the DC flow, list branches above rating.

    Raises :class:`IslandingError` when the outage splits the network,
    unless the removed branch carried no flow: then every island is
    balanced and keeps its pre-outage flows.
    """
    if not 0 <= outage < len(net.branches):
        raise KeyError(f"unknown branch id {outage}")
    _check_balanced(net)
    arr = _arrays or _DcArrays(net)
    keep = np.ones(len(arr.frm), dtype=bool)
    keep[outage] = False
    ref = _reference(net, reference_bus)
    if arr.islands(keep) > 1:
        # a bridge carries exactly the net injection of the side it cuts off,
        # so a zero-flow bridge leaves balanced islands whose flows are unchanged
        base = arr.base(ref)
        if abs(base[outage]) > EPS:
            raise IslandingError(f"outage of branch {net.branches[outage].label} islands the network")
        flows = base.copy()
        flows[outage] = np.nan
        return _overloads(arr, flows)
    return _overloads(arr, arr.solve(ref, keep))


def overload_report(net: Network, outage: int, overloads: list[Overload] | None) -> dict:
    """JSON record; ``overloads`` of ``None`` marks an islanding outage."""
    rec = {"outage": outage, "overloads": None if overloads is None else [o.to_json() for o in overloads]}
    if overloads is None:
        rec["islanding"] = True
    return rec


def _dc_chunk(args):
    net, ref, ids = args
    arr = _DcArrays(net)
    out = []
    for k in ids:
        try:
            out.append((k, dc_contingency(net, k, ref, _arrays=arr)))
        except IslandingError:
            out.append((k, None))
    return out


def dc_n_minus_1(net: Network, reference_bus: int | None = None, workers: int | None = 1):
    """Full re-solve for every single-branch outage.

    Returns ``(branch id, overloads or None)`` pairs in branch order; ``None``
    marks an outage that islands the network (zero-flow bridges excepted,
    see :func:`dc_contingency`).
    """
    _check_balanced(net)
    ids = list(range(len(net.branches)))
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(ids) < 2 * workers:
        return _dc_chunk((net, reference_bus, ids))
    chunks = [ids[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(workers) as pool:
        parts = pool.map(_dc_chunk, [(net, reference_bus, c) for c in chunks])
        return sorted((r for part in parts for r in part), key=lambda r: r[0])


def apply_redispatch(net: Network, deltas) -> Network:
    """Shift injections by ``(bus, delta_mw)`` pairs that sum to zero."""
    deltas = list(deltas)
    total = math.fsum(d for _, d in deltas)
    if abs(total) > BALANCE_TOL:
        raise ValueError(f"redispatch is unbalanced by {total:.6f} MW")
    inj = dict(net.injections)
    for bus, d in deltas:
        if bus not in inj:
            raise KeyError(f"unknown bus {bus}")
        inj[bus] += d
    return net.with_injections(inj, net.balance_policy)
