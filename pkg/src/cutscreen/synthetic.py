"""Random test networks that always admit a valid flow.

A random spanning tree plus extra (possibly parallel) branches gets random
susceptances and balanced random injections. Ratings are drawn around the
DC flow of that dispatch, never below it, so the DC solution itself is a
valid flow and ``build_flow`` cannot fail. Some ratings sit right at the DC
flow so outages regularly saturate a cut.
"""

from __future__ import annotations

import numpy as np

from .dcflow import solve_dc
from .network import BalancePolicy, Branch, Bus, Network


def random_network(
    rng: np.random.Generator | int | None = None,
    n_buses: int | None = None,
    *,
    min_buses: int = 6,
    max_buses: int = 12,
    extra_edges: int | None = None,
    parallel_prob: float = 0.1,
    tight_prob: float = 0.25,
    max_injection: float = 200.0,
) -> Network:
    rng = np.random.default_rng(rng)
    n = int(n_buses if n_buses is not None else rng.integers(min_buses, max_buses + 1))
    if n < 2:
        raise ValueError("need at least two buses")

    # random labelled tree: attach each bus to an earlier one
    perm = rng.permutation(n) + 1
    pairs = [(int(perm[i]), int(perm[rng.integers(0, i)])) for i in range(1, n)]
    if extra_edges is None:
        extra_edges = int(rng.integers(1, n + 1))
    for _ in range(extra_edges):
        a, b = (int(v) for v in rng.choice(n, size=2, replace=False) + 1)
        pairs.append((a, b))
    for k in range(len(pairs)):
        if rng.random() < parallel_prob:
            pairs.append(pairs[k])

    inj = np.round(rng.uniform(-max_injection, max_injection, size=n), 1)
    inj[rng.random(n) < 0.2] = 0.0
    inj -= inj.mean()
    inj[-1] = -inj[:-1].sum()

    susceptance = np.round(rng.uniform(1.0, 20.0, size=len(pairs)), 3)
    buses = tuple(Bus(i + 1, float(v)) for i, v in enumerate(inj))
    unrated = Network(
        buses,
        tuple(Branch(k, a, b, susceptance=float(s)) for k, ((a, b), s) in enumerate(zip(pairs, susceptance))),
        balance_policy=BalancePolicy.strict(),
    )
    flows = np.abs(solve_dc(unrated, reference_bus=1).flows)

    headroom = rng.uniform(1.0, 1.6, size=len(pairs))
    headroom[rng.random(len(pairs)) < tight_prob] = 1.0
    ratings = np.maximum(np.round(flows * headroom + 1e-3, 3), np.round(rng.uniform(0, 30, size=len(pairs)), 1))
    branches = tuple(
        Branch(k, a, b, float(r), float(s))
        for k, ((a, b), r, s) in enumerate(zip(pairs, ratings, susceptance))
    )
    return Network(buses, branches, balance_policy=BalancePolicy.strict(), name=f"random{n}")
