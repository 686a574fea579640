"""Grid graph model: case-file parsing, balancing and connectivity checks.

A :class:`Network` is the immutable input every other module consumes. Buses
carry a signed MW injection (generation positive, load negative); branches
carry a MW rating (``math.inf`` when unrated) and an optional series
susceptance used only by the DC solver.
"""

from __future__ import annotations

import enum
import math
import re
from collections import deque
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np

BALANCE_TOL = 1e-6
UNLIMITED = math.inf


class CaseError(ValueError):
    """Malformed or inconsistent case data."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BalanceError(ValueError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    injection: float


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    rating: float = UNLIMITED
    susceptance: float | None = None

    @property
    def label(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class Generator:
    """Dispatchable unit, kept so an economic dispatch can re-balance the case.

    Cost is ``c2 * p**2 + c1 * p + c0`` in $/h.
    """

    bus: int
    pg: float
    pmin: float = 0.0
    pmax: float = UNLIMITED
    c2: float = 0.0
    c1: float = 0.0
    c0: float = 0.0


class Balance(enum.Enum):
    SLACK_ABSORB = "slack"
    PROPORTIONAL_SCALE = "scale"
    STRICT = "strict"
    ECONOMIC_DISPATCH = "economic"


@dataclass(frozen=True)
class BalancePolicy:
    kind: Balance
    slack_bus: int | None = None

    @classmethod
    def slack(cls, bus: int | None = None) -> "BalancePolicy":
        return cls(Balance.SLACK_ABSORB, bus)

    @classmethod
    def scale(cls) -> "BalancePolicy":
        return cls(Balance.PROPORTIONAL_SCALE)

    @classmethod
    def strict(cls) -> "BalancePolicy":
        return cls(Balance.STRICT)

    @classmethod
    def economic(cls) -> "BalancePolicy":
        return cls(Balance.ECONOMIC_DISPATCH)

    @classmethod
    def parse(cls, text: str) -> "BalancePolicy":
        """Parse the CLI spelling: ``slack``, ``slack:<bus>``, ``scale``, ``strict``, ``economic``."""
        name, _, arg = text.partition(":")
        try:
            kind = Balance(name)
        except ValueError:
            raise ValueError(f"unknown balance policy {text!r}") from None
        if kind is Balance.SLACK_ABSORB:
            return cls.slack(int(arg) if arg else None)
        if arg:
            raise ValueError(f"balance policy {name!r} takes no argument")
        return cls(kind)

    def __str__(self) -> str:
        if self.kind is Balance.SLACK_ABSORB and self.slack_bus is not None:
            return f"slack:{self.slack_bus}"
        return self.kind.value


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...] = ()
    balance_policy: BalancePolicy | None = None
    base_mva: float = 100.0
    name: str = ""

    def __post_init__(self):
        seen = set()
        for bus in self.buses:
            if bus.id in seen:
                raise CaseError(f"duplicate bus id {bus.id}")
            if not math.isfinite(bus.injection):
                raise CaseError(f"bus {bus.id} has non-finite injection")
            seen.add(bus.id)
        for k, br in enumerate(self.branches):
            if br.id != k:
                raise CaseError(f"branch ids must be ordinal, got {br.id} at position {k}")
            if br.from_bus == br.to_bus:
                raise CaseError(f"branch {br.label} is a self-loop")
            for end in (br.from_bus, br.to_bus):
                if end not in seen:
                    raise CaseError(f"branch {br.id} ({br.label}) references unknown bus {end}")
            if br.rating < 0 or math.isnan(br.rating):
                raise CaseError(f"branch {br.label} has invalid rating {br.rating}")

    @cached_property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(sorted(b.id for b in self.buses))

    @cached_property
    def bus_id_array(self) -> np.ndarray:
        return np.asarray(self.bus_ids, dtype=np.int64)

    @cached_property
    def index(self) -> dict[int, int]:
        """Bus id -> dense position in ascending-id order."""
        return {b: i for i, b in enumerate(self.bus_ids)}

    @cached_property
    def injections(self) -> dict[int, float]:
        return {b.id: b.injection for b in self.buses}

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, int, int], ...], ...]:
        """Per dense bus index: ``(neighbour index, branch id, direction)``.

        ``direction`` is +1 when leaving the bus follows the branch's
        from->to orientation. Entries are sorted by neighbour bus id, then
        branch id, which fixes BFS tie-breaking.
        """
        idx = self.index
        adj: list[list[tuple[int, int, int]]] = [[] for _ in idx]
        for br in self.branches:
            f, t = idx[br.from_bus], idx[br.to_bus]
            adj[f].append((t, br.id, 1))
            adj[t].append((f, br.id, -1))
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense from/to bus indices per branch."""
        idx = self.index
        frm = np.fromiter((idx[br.from_bus] for br in self.branches), dtype=np.int64, count=len(self.branches))
        to = np.fromiter((idx[br.to_bus] for br in self.branches), dtype=np.int64, count=len(self.branches))
        return frm, to

    @cached_property
    def arc_order(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Directed arcs sorted by tail, two per branch.

        Arc ``k`` runs from->to and arc ``m + k`` to->from. Returns the
        permutation into that numbering plus the sorted tails and heads.
        """
        frm, to = self.endpoints
        tails = np.concatenate([frm, to])
        heads = np.concatenate([to, frm])
        order = np.lexsort((heads, tails))
        return order, tails[order], heads[order]

    @property
    def total_injection(self) -> float:
        return math.fsum(b.injection for b in self.buses)

    def branch(self, ref: int | str) -> Branch:
        """Look up a branch by ordinal id or by ``FROM-TO[:k]`` label.

        The label matches either orientation; ``k`` (1-based) picks among
        parallel branches.
        """
        if isinstance(ref, int):
            if not 0 <= ref < len(self.branches):
                raise KeyError(f"unknown branch id {ref}")
            return self.branches[ref]
        m = re.fullmatch(r"\s*(\d+)\s*-\s*(\d+)\s*(?::(\d+))?\s*", ref)
        if not m:
            raise KeyError(f"bad branch reference {ref!r}")
        a, b = int(m.group(1)), int(m.group(2))
        k = int(m.group(3) or 1)
        hits = [br for br in self.branches if {br.from_bus, br.to_bus} == {a, b}]
        if not 1 <= k <= len(hits):
            raise KeyError(f"unknown branch {ref!r}")
        return hits[k - 1]

    def with_injections(self, injections: dict[int, float], policy: BalancePolicy | None = None) -> "Network":
        buses = tuple(Bus(b.id, float(injections.get(b.id, b.injection))) for b in self.buses)
        return replace(self, buses=buses, balance_policy=policy)

    def without_branches(self, ids) -> "Network":
        drop = set(ids)
        kept = [br for br in self.branches if br.id not in drop]
        return replace(self, branches=tuple(replace(br, id=k) for k, br in enumerate(kept)))


# --------------------------------------------------------------------------
# parsing

_MATRIX_START = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[(.*)$")
_SCALAR = re.compile(r"^\s*mpc\.baseMVA\s*=\s*([-+0-9.eE]+)\s*;")


def _matpower_matrices(text: str) -> tuple[dict[str, list[tuple[int, list[float]]]], float]:
    mats: dict[str, list[tuple[int, list[float]]]] = {}
    base_mva = 100.0
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0]
        if current is None:
            m = _SCALAR.match(line)
            if m:
                base_mva = float(m.group(1))
                continue
            m = _MATRIX_START.match(line)
            if not m:
                continue
            current = m.group(1)
            mats[current] = []
            line = m.group(2)
        done = "]" in line
        if done:
            body, _, rest = line.partition("]")
            if rest.strip() not in ("", ";"):
                raise CaseError(f"unexpected text after matrix end: {rest.strip()!r}", lineno)
            line = body
        for chunk in line.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                row = [float(v) for v in chunk.replace(",", " ").split()]
            except ValueError:
                if current in ("bus", "gen", "branch", "gencost"):
                    raise CaseError(f"non-numeric entry in mpc.{current}: {chunk!r}", lineno) from None
                row = []
            mats[current].append((lineno, row))
        if done:
            current = None
    if current is not None:
        raise CaseError(f"mpc.{current} matrix not terminated by '];'")
    return mats, base_mva


def _need(row: list[float], n: int, what: str, lineno: int):
    if len(row) < n:
        raise CaseError(f"{what} row has {len(row)} columns, need at least {n}", lineno)


def _parse_matpower(text: str, name: str = "") -> Network:
    mats, base_mva = _matpower_matrices(text)
    for key in ("bus", "gen", "branch"):
        if key not in mats:
            raise CaseError(f"missing mpc.{key} matrix")

    load: dict[int, float] = {}
    order: list[int] = []
    for lineno, row in mats["bus"]:
        _need(row, 3, "bus", lineno)
        bid = int(row[0])
        if bid in load:
            raise CaseError(f"duplicate bus id {bid}", lineno)
        if bid <= 0:
            raise CaseError(f"bus id must be positive, got {bid}", lineno)
        load[bid] = row[2]
        order.append(bid)

    costs = [row for _, row in mats.get("gencost", [])]
    gens: list[Generator] = []
    gen_mw = dict.fromkeys(order, 0.0)
    for k, (lineno, row) in enumerate(mats["gen"]):
        _need(row, 2, "gen", lineno)
        bid = int(row[0])
        if bid not in load:
            raise CaseError(f"generator references unknown bus {bid}", lineno)
        if len(row) > 7 and row[7] <= 0:
            continue
        pmax = row[8] if len(row) > 8 else UNLIMITED
        pmin = row[9] if len(row) > 9 else 0.0
        c2 = c1 = c0 = 0.0
        if k < len(costs) and len(costs[k]) >= 4 and int(costs[k][0]) == 2:
            n = int(costs[k][3])
            coeffs = costs[k][4 : 4 + n][::-1] + [0.0, 0.0, 0.0]
            c0, c1, c2 = coeffs[0], coeffs[1], coeffs[2]
        gens.append(Generator(bid, row[1], pmin, pmax, c2, c1, c0))
        gen_mw[bid] += row[1]

    buses = tuple(Bus(b, gen_mw[b] - load[b]) for b in order)
    branches: list[Branch] = []
    for lineno, row in mats["branch"]:
        _need(row, 6, "branch", lineno)
        f, t = int(row[0]), int(row[1])
        for end in (f, t):
            if end not in load:
                raise CaseError(f"branch {f}-{t} references unknown bus {end}", lineno)
        if len(row) > 10 and row[10] <= 0:
            continue
        x, rate = row[3], row[5]
        branches.append(
            Branch(
                id=len(branches),
                from_bus=f,
                to_bus=t,
                rating=UNLIMITED if rate == 0 else rate,
                susceptance=1.0 / x if x > 0 else None,
            )
        )
    return Network(buses, tuple(branches), tuple(gens), base_mva=base_mva, name=name)


def _num(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise CaseError(f"expected a number, got {tok!r}", lineno) from None


def _int(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise CaseError(f"expected an integer, got {tok!r}", lineno) from None


def _parse_native(text: str, name: str = "") -> Network:
    header = None
    buses: list[Bus] = []
    seen: set[int] = set()
    raw_branches: list[tuple[int, list[str]]] = []
    gens: list[Generator] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = re.fullmatch(r"#\s*buses\s+(\d+)\s+branches\s+(\d+)", line)
            if m and header is None:
                header = (int(m.group(1)), int(m.group(2)), lineno)
            continue
        tok = line.split()
        kind = tok[0]
        if kind == "bus":
            if len(tok) != 3:
                raise CaseError("bus line needs: bus <id> <injection_MW>", lineno)
            bid = _int(tok[1], lineno)
            if bid in seen:
                raise CaseError(f"duplicate bus id {bid}", lineno)
            seen.add(bid)
            buses.append(Bus(bid, _num(tok[2], lineno)))
        elif kind == "branch":
            if len(tok) != 5:
                raise CaseError("branch line needs: branch <from> <to> <rating|inf> <susceptance|->", lineno)
            raw_branches.append((lineno, tok))
        elif kind == "gen":
            if len(tok) != 8:
                raise CaseError("gen line needs: gen <bus> <pg> <pmin> <pmax> <c2> <c1> <c0>", lineno)
            gens.append(Generator(_int(tok[1], lineno), *(_num(v, lineno) for v in tok[2:])))
        else:
            raise CaseError(f"unknown record type {kind!r}", lineno)

    branches = []
    for lineno, tok in raw_branches:
        f, t = _int(tok[1], lineno), _int(tok[2], lineno)
        for end in (f, t):
            if end not in seen:
                raise CaseError(f"branch {f}-{t} references unknown bus {end}", lineno)
        rating = UNLIMITED if tok[3] == "inf" else _num(tok[3], lineno)
        susceptance = None if tok[4] == "-" else _num(tok[4], lineno)
        try:
            branches.append(Branch(len(branches), f, t, rating, susceptance))
        except CaseError as exc:
            raise CaseError(str(exc), lineno) from None
    for g in gens:
        if g.bus not in seen:
            raise CaseError(f"generator references unknown bus {g.bus}")
    if header is not None and (header[0], header[1]) != (len(buses), len(branches)):
        raise CaseError(
            f"header declares {header[0]} buses / {header[1]} branches, found {len(buses)} / {len(branches)}",
            header[2],
        )
    try:
        return Network(tuple(buses), tuple(branches), tuple(gens), name=name)
    except CaseError as exc:
        raise CaseError(str(exc)) from None


def parse_case(text: str, format: str = "matpower", name: str = "") -> Network:
    """Parse case-file text into an unbalanced Network.

    ``format`` is ``"matpower"`` (a MATPOWER ``.m`` case) or ``"native"``
    (the line-oriented TSV written by :func:`to_native`).
    """
    if format == "matpower":
        return _parse_matpower(text, name)
    if format == "native":
        return _parse_native(text, name)
    raise ValueError(f"unknown case format {format!r}")


def load_case(path: str | Path, format: str | None = None) -> Network:
    path = Path(path)
    if format is None:
        format = "matpower" if path.suffix == ".m" else "native"
    return parse_case(path.read_text(), format, name=path.stem)


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return repr(float(x))


def to_native(net: Network) -> str:
    lines = [f"#buses {len(net.buses)} branches {len(net.branches)}"]
    lines += [f"bus {b.id} {_fmt(b.injection)}" for b in net.buses]
    for br in net.branches:
        b = "-" if br.susceptance is None else _fmt(br.susceptance)
        lines.append(f"branch {br.from_bus} {br.to_bus} {_fmt(br.rating)} {b}")
    for g in net.generators:
        vals = " ".join(_fmt(v) for v in (g.pg, g.pmin, g.pmax, g.c2, g.c1, g.c0))
        lines.append(f"gen {g.bus} {vals}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# balancing


def default_slack_bus(net: Network) -> int:
    """Bus hosting the largest generator (lowest id on ties)."""
    if net.generators:
        return min(net.generators, key=lambda g: (-g.pg, g.bus)).bus
    return min(net.buses, key=lambda b: (-b.injection, b.id)).id


def _economic_dispatch(net: Network) -> dict[int, float]:
    gens = net.generators
    if not gens:
        raise BalanceError("economic dispatch needs generator data")
    demand = math.fsum(g.pg for g in gens) - net.total_injection
    lo_cap = math.fsum(g.pmin for g in gens)
    hi_cap = math.fsum(g.pmax for g in gens)
    if not lo_cap - BALANCE_TOL <= demand <= hi_cap + BALANCE_TOL:
        raise BalanceError(f"demand {demand:.3f} MW outside dispatchable range [{lo_cap:.3f}, {hi_cap:.3f}]")

    def output(lam: float) -> list[float]:
        out = []
        for g in gens:
            if g.c2 > 0:
                p = (lam - g.c1) / (2 * g.c2)
            else:
                p = g.pmax if lam > g.c1 else g.pmin
            out.append(min(max(p, g.pmin), g.pmax))
        return out

    prices = [g.c1 + 2 * g.c2 * p for g in gens for p in (g.pmin, min(g.pmax, 1e9))]
    lo, hi = min(prices) - 1.0, max(prices) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.fsum(output(mid)) < demand:
            lo = mid
        else:
            hi = mid
    p_lo, p_hi = output(lo), output(hi)
    s_lo, s_hi = math.fsum(p_lo), math.fsum(p_hi)
    alpha = 0.0 if s_hi == s_lo else (demand - s_lo) / (s_hi - s_lo)
    dispatch = [a + alpha * (b - a) for a, b in zip(p_lo, p_hi)]

    inj = dict(net.injections)
    for g, p in zip(gens, dispatch):
        inj[g.bus] += p - g.pg
    return inj


def balance(net: Network, policy: BalancePolicy | None = None) -> Network:
    """Return a copy of ``net`` whose injections sum to zero.

    The default policy absorbs the mismatch at :func:`default_slack_bus`.
    """
    if policy is None:
        policy = BalancePolicy.slack()
    inj = dict(net.injections)
    mismatch = net.total_injection
    kind = policy.kind

    if kind is Balance.STRICT:
        if abs(mismatch) > BALANCE_TOL:
            raise BalanceError(f"generation/load mismatch of {mismatch:.6f} MW")
        return replace(net, balance_policy=policy)

    if kind is Balance.SLACK_ABSORB:
        bus = policy.slack_bus if policy.slack_bus is not None else default_slack_bus(net)
        if bus not in inj:
            raise BalanceError(f"slack bus {bus} not in network")
        inj[bus] -= mismatch
        return net.with_injections(inj, BalancePolicy.slack(bus))

    if kind is Balance.PROPORTIONAL_SCALE:
        gen = math.fsum(v for v in inj.values() if v > 0)
        load = -math.fsum(v for v in inj.values() if v < 0)
        if gen == 0:
            if load > 0:
                raise BalanceError("no generation to scale against load")
            return replace(net, balance_policy=policy)
        factor = load / gen
        return net.with_injections({b: v * factor if v > 0 else v for b, v in inj.items()}, policy)

    if kind is Balance.ECONOMIC_DISPATCH:
        if not net.generators and abs(mismatch) <= BALANCE_TOL:
            return replace(net, balance_policy=policy)
        return net.with_injections(_economic_dispatch(net), policy)

    raise ValueError(f"unhandled balance policy {policy}")


# --------------------------------------------------------------------------
# connectivity


def validate_connectivity(net: Network, skip_branches=()) -> list[set[int]]:
    """Connected components as sets of bus ids, ordered by smallest member."""
    skip = set(skip_branches)
    ids = net.bus_ids
    seen = [False] * len(ids)
    comps = []
    for start in range(len(ids)):
        if seen[start]:
            continue
        seen[start] = True
        comp = [start]
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v, k, _ in net.adjacency[u]:
                if not seen[v] and k not in skip:
                    seen[v] = True
                    comp.append(v)
                    queue.append(v)
        comps.append({ids[i] for i in comp})
    return comps


def is_connected(net: Network) -> bool:
    return len(validate_connectivity(net)) == 1


# --------------------------------------------------------------------------
# bundled data

DATA_DIR = Path(__file__).parent / "data"


def bundled_case(name: str) -> Network:
    """Load one of the shipped cases: ``case5``, ``case39`` or ``case2383wp``."""
    for suffix in (".m", ".tsv"):
        p = DATA_DIR / f"{name}{suffix}"
        if p.exists():
            return load_case(p)
    raise FileNotFoundError(f"no bundled case named {name!r}")
