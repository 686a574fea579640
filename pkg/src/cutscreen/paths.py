"""Fewest-hop augmenting path search over directed spare capacities."""

from __future__ import annotations

import numpy as np

EPS = 1e-6


def shortest_path(adj, fwd, bwd, s: int, t: int, removed: int = -1):
    """Fewest-hop path ``s -> t`` through arcs whose spare exceeds ``EPS``.

    ``adj`` is ``Network.adjacency``; ``fwd[k]``/``bwd[k]`` are the spare MW
    of branch ``k`` along / against its orientation. Branch ``removed`` is
    never used.

    Bidirectional BFS, expanding one whole level of the smaller frontier at
    a time; the first meeting point closes a shortest path. Returns
    ``(arcs, None, None)`` with arcs as ``(branch, direction)`` pairs. On
    failure returns ``(None, from_s, to_t)``: whichever search ran dry
    yields a mask of every bus reachable from ``s`` (``from_s``) or able to
    reach ``t`` (``to_t``); the other entry is ``None``.
    """
    par_s = {s: None}
    par_t = {t: None}
    front_s, front_t = [s], [t]
    meet = None
    while front_s and front_t:
        nxt = []
        if len(front_s) <= len(front_t):
            for u in front_s:
                for v, k, d in adj[u]:
                    if v in par_s or k == removed:
                        continue
                    if (fwd[k] if d > 0 else bwd[k]) > EPS:
                        par_s[v] = (u, k, d)
                        if v in par_t:
                            meet = v
                            break
                        nxt.append(v)
                if meet is not None:
                    break
            front_s = nxt
        else:
            for u in front_t:
                for v, k, d in adj[u]:
                    if v in par_t or k == removed:
                        continue
                    # arc v -> u runs against d
                    if (bwd[k] if d > 0 else fwd[k]) > EPS:
                        par_t[v] = (u, k, -d)
                        if v in par_s:
                            meet = v
                            break
                        nxt.append(v)
                if meet is not None:
                    break
            front_t = nxt
        if meet is not None:
            arcs = []
            v = meet
            while par_s[v] is not None:
                u, k, d = par_s[v]
                arcs.append((k, d))
                v = u
            arcs.reverse()
            v = meet
            while par_t[v] is not None:
                w, k, d = par_t[v]
                arcs.append((k, d))
                v = w
            return arcs, None, None
    if not front_s:
        return None, _mask(len(adj), par_s), None
    return None, None, _mask(len(adj), par_t)


def _mask(n: int, members) -> np.ndarray:
    seen = np.zeros(n, dtype=bool)
    seen[list(members)] = True
    return seen
