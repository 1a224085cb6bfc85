"""Propagation of pre-existing error strings through transport protocols.

Two mechanisms move errors around. Free relabelings map every edge to
an edge, so a connected string of flipped edges stays a connected
string with exactly the same edge count; what changes is its shape,
measured here by the grid span between its endpoints (strings crossing
the sheared corridor tilt, strings inside the rigid block ride along
unchanged). Gate layers grow an error's support instead: any gate
touching a suspect qubit spreads suspicion to its whole support, one
layer at a time, which is the usual light-cone bound.

The report at the bottom pushes seeded random short strings through a
full braid at several code distances and tabulates the growth ratios.
The protocol is depth-invariant in the distance, so the measured max
ratio must not drift upward with d; that is the constant-factor claim
this module exists to check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .circuits import GateCircuit, compile_schedule
from .fusion import FusionData, fibonacci_data
from .gadgets import LOCAL, MoveSchedule, braid_schedule
from .lattice import (
    PERMUTATION,
    MoveError,
    SurfaceLattice,
    apply_cpi,
    build_planar_patch,
    polar_vertex_id,
)

__all__ = [
    "ErrorString",
    "error_string",
    "string_endpoints",
    "grid_span",
    "propagate_cpi",
    "lightcone_grow",
    "lightcone_radius_bound",
    "braid_error_trial",
    "stretch_report",
    "report_to_csv",
    "report_to_json",
]


@dataclass(frozen=True)
class ErrorString:
    """Connected open path of suspect edges; length is the edge count."""

    edges: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.edges)


def _edge_verts(lat: SurfaceLattice, eid: int) -> tuple[int, int]:
    rec = lat.edges[eid]
    return rec.v1, rec.v2


def error_string(lat: SurfaceLattice, edges) -> ErrorString:
    """Validate that consecutive edges chain through shared vertices."""
    edges = tuple(int(e) for e in edges)
    if not edges:
        raise MoveError("error string needs at least one edge")
    if len(set(edges)) != len(edges):
        raise MoveError("error string repeats an edge")
    for e in edges:
        if e not in lat.edges:
            raise MoveError(f"edge {e} is not on the lattice")
    for prev, nxt in zip(edges, edges[1:]):
        if not set(_edge_verts(lat, prev)) & set(_edge_verts(lat, nxt)):
            raise MoveError("consecutive error-string edges share no vertex")
    return ErrorString(edges)


def string_endpoints(lat: SurfaceLattice, err: ErrorString) -> tuple[int, int]:
    """Free ends of the path (for a single edge, its two endpoints)."""
    if err.length == 1:
        return _edge_verts(lat, err.edges[0])
    first = set(_edge_verts(lat, err.edges[0]))
    second = set(_edge_verts(lat, err.edges[1]))
    start = (first - second).pop() if first - second else first.pop()
    last = set(_edge_verts(lat, err.edges[-1]))
    prior = set(_edge_verts(lat, err.edges[-2]))
    end = (last - prior).pop() if last - prior else last.pop()
    return start, end


def _ring_sector(lat: SurfaceLattice, vid: int, cols: int) -> tuple[int, int]:
    if vid == 0:
        return 0, 0
    return (vid - 1) // cols + 1, (vid - 1) % cols


def grid_span(lat: SurfaceLattice, err: ErrorString, cols: int) -> int:
    """Ring-plus-sector distance between the string's endpoints.

    The combinatorial edge count never changes under a relabeling; the
    span is what the shear squeezes or stretches.
    """
    u, v = string_endpoints(lat, err)
    ru, su = _ring_sector(lat, u, cols)
    rv, sv = _ring_sector(lat, v, cols)
    ds = abs(su - sv)
    return abs(ru - rv) + min(ds, cols - ds)


def propagate_cpi(
    err: ErrorString,
    sigma: dict[int, int],
    lat: SurfaceLattice,
    target: SurfaceLattice | None = None,
) -> tuple[ErrorString, SurfaceLattice]:
    """Push a string through an accepted relabeling.

    sigma maps qubit slots, exactly as the permutation records store
    it. The move is validated by the lattice layer; the image string is
    re-validated as a connected path, which the edge-to-edge property
    guarantees. Edge count is preserved exactly.
    """
    out_lat, _rec = apply_cpi(lat, sigma, target=target)
    slot_of = {e: rec.qubit for e, rec in lat.edges.items() if rec.qubit is not None}
    edge_of = {rec.qubit: e for e, rec in out_lat.edges.items() if rec.qubit is not None}
    mapped = []
    for e in err.edges:
        slot = slot_of.get(e)
        if slot is None:
            raise MoveError(f"edge {e} carries no qubit, cannot relabel an error on it")
        mapped.append(edge_of[sigma.get(slot, slot)])
    out = error_string(out_lat, mapped)
    return out, out_lat


def lightcone_radius_bound(circuit: GateCircuit) -> int:
    """Worst-case support growth in edge hops: depth times gate reach.

    Per layer the suspect set can spread at most to the far side of one
    touching gate, so the reach is the largest gate support minus one.
    The bound depends only on the compiled shape, which is the point:
    depth-invariant protocols get a size-independent radius.
    """
    reach = 0
    for layer in circuit.layers:
        for gate in layer:
            reach = max(reach, len(gate.support()) - 1)
    return circuit.depth() * reach


def lightcone_grow(support, circuit: GateCircuit) -> frozenset[int]:
    """Grow a suspect-slot set through every layer of a circuit.

    Edges are addressed by their qubit slots, the circuit's own
    alphabet. Each gate layer adds the full support of every gate that
    touches the current set; relabelings move the set without growing
    it. An empty circuit returns the input unchanged.
    """
    cur = frozenset(int(q) for q in support)
    perms = list(circuit.permutation_layers)
    cursor = 0
    for i in range(len(circuit.layers) + 1):
        while cursor < len(perms) and perms[cursor][0] == i:
            moved = dict(perms[cursor][1])
            cur = frozenset(moved.get(q, q) for q in cur)
            cursor += 1
        if i < len(circuit.layers):
            grown = set(cur)
            for gate in circuit.layers[i]:
                sup = gate.support()
                if sup & cur:
                    grown |= sup
            cur = frozenset(grown)
    return cur


# ---- braid-level analysis ------------------------------------------------------


def _edge_adjacency(lat: SurfaceLattice) -> dict[int, set[int]]:
    at_vertex: dict[int, set[int]] = {}
    for e, rec in lat.edges.items():
        if rec.qubit is None:
            continue
        for v in (rec.v1, rec.v2):
            at_vertex.setdefault(v, set()).add(e)
    adj: dict[int, set[int]] = {}
    for edges in at_vertex.values():
        for e in edges:
            adj.setdefault(e, set()).update(edges - {e})
    return adj


def _sample_string(
    lat: SurfaceLattice,
    rng: np.random.Generator,
    length: int,
    cols: int,
    rings: tuple[int, int] | None = None,
) -> ErrorString:
    """Random connected path over qubit-bearing edges, length edges.

    With a ring window, the first edge must touch it; strings far from
    the transport corridor ride rigidly and only dilute the statistics.
    Resamples until the endpoints are distinct vertices, so the span
    ratio below is well defined (a walk that loops back would report a
    zero-length anyon pair).
    """
    adj = _edge_adjacency(lat)
    if rings is None:
        pool = sorted(adj)
    else:
        lo, hi = rings
        pool = []
        for e in sorted(adj):
            rec = lat.edges[e]
            r1 = _ring_sector(lat, rec.v1, cols)[0]
            r2 = _ring_sector(lat, rec.v2, cols)[0]
            if lo <= r1 <= hi or lo <= r2 <= hi:
                pool.append(e)
    for _ in range(256):
        start = pool[int(rng.integers(len(pool)))]
        path = [start]
        used = {start}
        while len(path) < length:
            options = sorted(adj[path[-1]] - used)
            if not options:
                break
            nxt = options[int(rng.integers(len(options)))]
            path.append(nxt)
            used.add(nxt)
        if len(path) != length:
            continue
        err = error_string(lat, path)
        if grid_span(lat, err, cols) >= 1:
            return err
    raise MoveError("could not sample a connected error string")


def _bfs_distance(adj: dict[int, set[int]], seeds, targets) -> int:
    """Max over targets of hop distance to the seed set."""
    seen = {s: 0 for s in seeds}
    frontier = list(seeds)
    while frontier:
        nxt = []
        for e in frontier:
            for o in adj[e]:
                if o not in seen:
                    seen[o] = seen[e] + 1
                    nxt.append(o)
        frontier = nxt
    return max(seen[t] for t in targets)


def braid_error_trial(
    lat: SurfaceLattice,
    schedule: MoveSchedule,
    circuit: GateCircuit,
    err: ErrorString,
    cols: int,
) -> dict:
    """Push one string through one braid, both mechanisms at once.

    The string's edge ids ride through LOCAL moves unchanged (a flip
    conjugates the error inside its quad, which the light cone already
    over-covers) and remap through each relabeling. Each relabeling's
    sigma is recorded against the lattice right before it, so the walk
    replays LOCAL groups on the lattice to keep the sources aligned.
    Mid-protocol the edge set need not be a path (its own edges may sit
    on flipped diagonals); the edge count is still invariant, and the
    protocol closes on the starting layout where the span comparison
    is made. The returned lengths count edges: initial the string,
    final the light-cone-grown support.
    """
    from .gadgets import _apply_record  # local import, avoids cycle at module load

    slot_of = {e: rec.qubit for e, rec in lat.edges.items() if rec.qubit is not None}
    cur_edges = tuple(err.edges)
    cur_lat = lat
    for group in schedule.groups:
        if group.kind == LOCAL:
            for layer in group.layers:
                for rec in layer:
                    _, cur_lat = _apply_record(None, cur_lat, rec, None, None)
        elif group.kind == PERMUTATION:
            (rec,) = group.records()
            sigma = dict(rec.sigma)
            src_slot = {
                e: r.qubit for e, r in cur_lat.edges.items() if r.qubit is not None
            }
            _, cur_lat = _apply_record(None, cur_lat, rec, group.target, None)
            dst_edge = {
                r.qubit: e for e, r in cur_lat.edges.items() if r.qubit is not None
            }
            cur_edges = tuple(
                dst_edge[sigma.get(src_slot[e], src_slot[e])] for e in cur_edges
            )
        else:
            raise MoveError(f"unknown group kind {group.kind!r}")
    if len(cur_edges) != err.length:
        raise MoveError("relabeling changed an error string's edge count")
    final_err = ErrorString(cur_edges)

    support = frozenset(slot_of[e] for e in err.edges)
    grown = lightcone_grow(support, circuit)
    edge_of = {rec.qubit: e for e, rec in cur_lat.edges.items() if rec.qubit is not None}
    final_edges = sorted(edge_of[q] for q in grown)

    adj = _edge_adjacency(cur_lat)
    spread = _bfs_distance(adj, set(cur_edges), set(final_edges))
    span0 = grid_span(lat, err, cols)
    span1 = grid_span(cur_lat, final_err, cols)
    return {
        # the anyon-pair separation is the length a decoder sees; the
        # edge count is invariant by construction and asserted above
        "initial_len": span0,
        "final_len": span1,
        "ratio": span1 / span0,
        "edge_count": err.length,
        "support_size": len(final_edges),
        "lightcone_spread": spread,
    }


def _braid_setup(d: int, data: FusionData):
    rows, cols = d // 2 + 4, 3 * d
    lat = build_planar_patch(rows, cols, punctures=[(0, 0), (2, 0)])
    anyon = polar_vertex_id(cols, 2, 0)
    sched = braid_schedule(lat, anyon, 0, steps=6, data=data)
    circ = compile_schedule(lat, sched, data)
    return lat, cols, sched, circ


def stretch_report(
    lattice_sizes: list[int],
    trials: int,
    seed: int,
    string_lengths: tuple[int, ...] = (2, 3, 4),
    data: FusionData | None = None,
) -> dict:
    """Seeded stretch statistics per code distance.

    Per trial, a fresh RNG stream keyed by (seed, size, trial) samples
    a short string and one braid pushes it through. Identical inputs
    give identical reports, including the CSV rendering.
    """
    if trials < 1:
        raise MoveError("need at least one trial")
    data = fibonacci_data() if data is None else data
    rows_out = []
    summary = []
    for d in lattice_sizes:
        lat, cols, sched, circ = _braid_setup(int(d), data)
        k = cols // 6
        window = (2, k + 4)  # transport corridor plus one ring either side
        ratios = []
        spreads = []
        for t in range(trials):
            rng = np.random.default_rng((int(seed), int(d), t))
            length = string_lengths[int(rng.integers(len(string_lengths)))]
            err = _sample_string(lat, rng, length, cols, rings=window)
            res = braid_error_trial(lat, sched, circ, err, cols)
            ratios.append(res["ratio"])
            spreads.append(res["lightcone_spread"])
            rows_out.append(
                {
                    "d": int(d),
                    "trial": t,
                    "initial_len": res["initial_len"],
                    "final_len": res["final_len"],
                    "ratio": res["ratio"],
                }
            )
        summary.append(
            {
                "d": int(d),
                "max_ratio": max(ratios),
                "mean_ratio": sum(ratios) / len(ratios),
                "lightcone_radius": lightcone_radius_bound(circ),
                "max_lightcone_spread": max(spreads),
            }
        )
    return {"trials": trials, "seed": int(seed), "rows": rows_out, "summary": summary}


def report_to_csv(report: dict) -> str:
    lines = ["d,trial,initial_len,final_len,ratio"]
    for row in report["rows"]:
        lines.append(
            f"{row['d']},{row['trial']},{row['initial_len']},"
            f"{row['final_len']},{row['ratio']:.6f}"
        )
    return "\n".join(lines) + "\n"


def report_to_json(report: dict) -> str:
    doc = {
        "seed": report["seed"],
        "trials": report["trials"],
        "summary": report["summary"],
    }
    return json.dumps(doc, indent=2, sort_keys=True)
