"""Transport protocols packaged as replayable move schedules.

A protocol here is a ``MoveSchedule``: an ordered tuple of move groups,
each either LOCAL (one or more layers of moves whose qubit supports are
pairwise disjoint inside a layer) or PERMUTATION (a single
connectivity-preserving relocation of qubits). Schedules are built by
dry-running the lattice rewrites, so every record carries concrete edge
and triangle ids and replays deterministically on a state.

Builders:

* ``split_row`` / ``merge_rows`` insert or remove one ring of vertices
  across a cyclic row of annulus cells. The layer count is constant,
  independent of the row length.
* ``shear_step`` translates a puncture by ``stride`` sectors: a constant
  number of flip layers followed by one ramped-rotation permutation.
* ``braid_schedule`` / ``braid`` wind one puncture once around another
  as a fixed number of shear steps; depth does not grow with distance.
* ``baseline_schedule`` / ``sequential_baseline`` move a puncture one
  sector per hop, so the group count grows linearly with the path. This
  is the correctness oracle the braid is compared against.
* ``logical_action`` returns the matrix a closed protocol induces on an
  orthonormal basis of the encoded subspace.

Depth accounting: ``local_depth`` is the most layers in any LOCAL group,
``permutation_range`` the largest qubit displacement of any PERMUTATION
group measured combinatorially (ring steps plus circular sector steps on
the patch grid), and ``total_steps`` the number of groups. Euclidean
displacement of the drawing is kept on the raw move records but plays no
role in the depth report; the grid metric is the one that stays
proportional to the stride when the patch is rescaled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .fusion import FusionData, fibonacci_data
from .lattice import (
    F_MOVE,
    LOCAL_SWAP,
    PACHNER_13,
    PACHNER_31,
    PERMUTATION,
    MoveError,
    MoveRecord,
    SurfaceLattice,
    apply_cpi,
    build_planar_patch,
    pachner_13,
    pachner_22,
    pachner_31,
    polar_vertex_id,
    sigma_from_vertex_map,
)
from .statevec import (
    StringNetState,
    apply_fmove,
    apply_pachner13,
    apply_pachner31,
    apply_state_permutation,
    enumerate_valid_configs,
    ground_project,
    inner,
    make_delta_state,
    make_state,
    rebind_state,
)

LOCAL = "LOCAL"

__all__ = [
    "LOCAL",
    "MoveGroup",
    "MoveSchedule",
    "DepthReport",
    "run_schedule",
    "shear_step",
    "braid_schedule",
    "braid",
    "baseline_schedule",
    "sequential_baseline",
    "split_row",
    "merge_rows",
    "encoded_basis",
    "logical_action",
    "schedule_to_json",
    "depth_report_to_json",
]


@dataclass(frozen=True)
class MoveGroup:
    """One protocol step: parallel move layers, or one permutation.

    kind is LOCAL or PERMUTATION. For LOCAL groups ``layers`` holds one
    tuple of records per parallel layer; supports inside a layer must be
    disjoint and ``run_schedule`` re-checks that on replay. PERMUTATION
    groups hold exactly one record plus the prebuilt target lattice and
    the grid-metric displacement of the relabeling.
    """

    kind: str
    layers: tuple[tuple[MoveRecord, ...], ...]
    target: SurfaceLattice | None = None
    range: float = 0.0
    tag: str = ""

    def records(self) -> Iterable[MoveRecord]:
        for layer in self.layers:
            yield from layer

    def to_jsonable(self) -> dict:
        doc = {
            "kind": self.kind,
            "tag": self.tag,
            "layers": [[rec.to_jsonable() for rec in layer] for layer in self.layers],
        }
        if self.kind == PERMUTATION:
            doc["range"] = self.range
        return doc


@dataclass(frozen=True)
class MoveSchedule:
    groups: tuple[MoveGroup, ...] = ()

    def records(self) -> Iterable[MoveRecord]:
        for group in self.groups:
            yield from group.records()

    def move_count(self) -> int:
        return sum(1 for _ in self.records())

    def depth_report(self) -> DepthReport:
        local_depth = max(
            (len(g.layers) for g in self.groups if g.kind == LOCAL), default=0
        )
        permutation_range = max(
            (g.range for g in self.groups if g.kind == PERMUTATION), default=0.0
        )
        return DepthReport(
            local_depth=local_depth,
            permutation_range=float(permutation_range),
            total_steps=len(self.groups),
        )

    def then(self, other: "MoveSchedule") -> "MoveSchedule":
        return MoveSchedule(self.groups + other.groups)

    def to_jsonable(self) -> dict:
        return {"groups": [g.to_jsonable() for g in self.groups]}


@dataclass(frozen=True)
class DepthReport:
    local_depth: int
    permutation_range: float
    total_steps: int

    def to_jsonable(self) -> dict:
        return {
            "local_depth": self.local_depth,
            "permutation_range": self.permutation_range,
            "total_steps": self.total_steps,
        }


def schedule_to_json(schedule: MoveSchedule) -> str:
    return json.dumps(schedule.to_jsonable(), indent=2, sort_keys=True)


def depth_report_to_json(report: DepthReport) -> str:
    return json.dumps(report.to_jsonable(), indent=2, sort_keys=True)


# -- canonical patch arithmetic ---------------------------------------------
#
# All builders below run on lattices laid out exactly like
# build_planar_patch output: vertex 0 at the center, ring r sector s at
# id 1 + (r-1)*cols + s, and edge ids in builder order (center spokes,
# ring edges, radial spokes, diagonals). That lets move targets be
# computed arithmetically instead of by search. _canonical_disk verifies
# the layout and raises MoveError when it does not hold, e.g. after a
# split that has not been merged back.


def _disk_coords(vid: int, cols: int) -> tuple[int, int]:
    if vid == 0:
        return 0, 0
    return (vid - 1) // cols + 1, (vid - 1) % cols


def _eid_ring(rows: int, cols: int, r: int, s: int) -> int:
    return cols + (r - 1) * cols + (s % cols)


def _eid_spoke(rows: int, cols: int, r: int, s: int) -> int:
    return cols + rows * cols + (r - 1) * cols + (s % cols)


def _eid_diag(rows: int, cols: int, r: int, s: int) -> int:
    return cols + rows * cols + (rows - 1) * cols + (r - 1) * cols + (s % cols)


def _tid_lower(rows: int, cols: int, r: int, s: int) -> int:
    return cols + 2 * ((r - 1) * cols + (s % cols))


def _canonical_disk(lat: SurfaceLattice) -> tuple[int, int]:
    """Return (rows, cols) after verifying builder layout, ids included."""
    bad = MoveError("lattice does not have the canonical patch layout")
    if lat.topology != "disk" or 0 not in lat.vertices:
        raise bad
    cols = sum(1 for e in lat.edges.values() if 0 in e.endpoints())
    if cols < 2:
        raise bad
    nv = len(lat.vertices)
    if (nv - 1) % cols:
        raise bad
    rows = (nv - 1) // cols
    if rows < 2:
        raise bad
    n_edges = cols + rows * cols + 2 * (rows - 1) * cols
    if len(lat.edges) != n_edges or len(lat.triangles) != cols + 2 * (rows - 1) * cols:
        raise bad

    def expect(eid: int, v1: int, v2: int, pinned: bool) -> None:
        edge = lat.edges.get(eid)
        if edge is None or edge.endpoints() != frozenset((v1, v2)):
            raise bad
        if edge.pinned != pinned:
            raise bad

    for s in range(cols):
        expect(s, 0, polar_vertex_id(cols, 1, s), False)
        for r in range(1, rows + 1):
            expect(
                _eid_ring(rows, cols, r, s),
                polar_vertex_id(cols, r, s),
                polar_vertex_id(cols, r, s + 1),
                r == rows,
            )
        for r in range(1, rows):
            expect(
                _eid_spoke(rows, cols, r, s),
                polar_vertex_id(cols, r, s),
                polar_vertex_id(cols, r + 1, s),
                False,
            )
            expect(
                _eid_diag(rows, cols, r, s),
                polar_vertex_id(cols, r, s),
                polar_vertex_id(cols, r + 1, s + 1),
                False,
            )
    return rows, cols


# -- schedule execution ------------------------------------------------------


def _record_slots(lat: SurfaceLattice, rec: MoveRecord) -> set[int]:
    """Qubit slots a move touches, evaluated on the pre-move lattice."""

    def slots_of(edge_ids: Iterable[int]) -> set[int]:
        out = set()
        for eid in edge_ids:
            q = lat.edges[eid].qubit
            if q is not None:
                out.add(q)
        return out

    if rec.kind == F_MOVE:
        return slots_of((rec.edge,) + tuple(rec.legs))
    if rec.kind == PACHNER_13:
        return slots_of(rec.legs) | set(rec.new_slots)
    if rec.kind == PACHNER_31:
        # new_edges here are the spokes the move removes; they exist now
        return slots_of(tuple(rec.legs) + tuple(rec.new_edges))
    if rec.kind in (LOCAL_SWAP, PERMUTATION):
        sigma = rec.sigma or {}
        return set(sigma) | set(sigma.values())
    raise MoveError(f"unknown move kind {rec.kind!r}")


def _apply_record(
    state: StringNetState | None,
    lat: SurfaceLattice,
    rec: MoveRecord,
    target: SurfaceLattice | None,
    data: FusionData,
) -> tuple[StringNetState | None, SurfaceLattice]:
    if rec.kind == F_MOVE:
        if state is None:
            return None, pachner_22(lat, rec.edge)[0]
        return apply_fmove(state, lat, rec.edge, data)
    if rec.kind == PACHNER_13:
        if state is None:
            return None, pachner_13(lat, rec.triangles[0])[0]
        return apply_pachner13(state, lat, rec.triangles[0], data)
    if rec.kind == PACHNER_31:
        if state is None:
            return None, pachner_31(lat, rec.vertex)[0]
        return apply_pachner31(state, lat, rec.vertex, data)
    if rec.kind in (LOCAL_SWAP, PERMUTATION):
        sigma = dict(rec.sigma or {})
        if state is None:
            return None, apply_cpi(lat, sigma, target=target)[0]
        return apply_state_permutation(state, lat, sigma, target=target)
    raise MoveError(f"unknown move kind {rec.kind!r}")


def _diff_norm(lat: SurfaceLattice, a: StringNetState, b: StringNetState) -> float:
    cfg = np.concatenate([a.configs, b.configs])
    amp = np.concatenate([a.amps, -b.amps])
    return make_state(lat, cfg, amp, tolerance=0.0).norm()


def run_schedule(
    state: StringNetState | None,
    lat: SurfaceLattice,
    schedule: MoveSchedule,
    data: FusionData | None = None,
    assert_code_space: bool = False,
    code_tol: float = 1e-10,
) -> tuple[StringNetState | None, SurfaceLattice]:
    """Replay a schedule on a state, or on the lattice alone if state is None.

    Each LOCAL layer is verified to have pairwise disjoint qubit
    supports before it runs; overlap raises MoveError, since such a
    layer could not execute in one parallel time step. With
    assert_code_space the state is re-projected after every LOCAL group
    and must be left unchanged within code_tol (relative).
    """
    data = fibonacci_data() if data is None else data
    cur, cur_lat = state, lat
    for group in schedule.groups:
        if group.kind == LOCAL:
            for layer in group.layers:
                seen: set[int] = set()
                for rec in layer:
                    slots = _record_slots(cur_lat, rec)
                    if seen & slots:
                        raise MoveError("parallel layer has overlapping move supports")
                    seen |= slots
                for rec in layer:
                    cur, cur_lat = _apply_record(cur, cur_lat, rec, None, data)
        elif group.kind == PERMUTATION:
            recs = tuple(group.records())
            if len(recs) != 1:
                raise MoveError("permutation group must hold exactly one record")
            cur, cur_lat = _apply_record(cur, cur_lat, recs[0], group.target, data)
        else:
            raise MoveError(f"unknown group kind {group.kind!r}")
        if assert_code_space and cur is not None and group.kind == LOCAL:
            proj = ground_project(cur, cur_lat, data)
            if _diff_norm(cur_lat, proj, cur) > code_tol * max(cur.norm(), 1.0):
                raise MoveError("schedule left the code space after a local group")
    return cur, cur_lat


# -- shear steps and braids --------------------------------------------------


def _cpi_grid_range(lat: SurfaceLattice, vmap: dict[int, int], cols: int) -> float:
    worst = 0
    for edge in lat.edges.values():
        if edge.qubit is None:
            continue
        for v in edge.endpoints():
            r1, s1 = _disk_coords(v, cols)
            r2, s2 = _disk_coords(vmap[v], cols)
            ds = abs(s1 - s2)
            ds = min(ds, cols - ds)
            worst = max(worst, abs(r1 - r2) + ds)
    return float(worst)


def shear_step(
    lat: SurfaceLattice,
    anyon_id: int,
    direction: int = -1,
    stride: int | None = None,
    data: FusionData | None = None,
) -> MoveSchedule:
    """Translate a puncture by `stride` sectors around its ring.

    The schedule has two groups. First a LOCAL group flips one edge per
    cell in the `stride` annuli just outside the puncture ring: the
    diagonals when direction is -1, the radial spokes when +1 (the two
    cases are mirror images; which edge family lines back up with the
    canonical layout depends on the sense of rotation). Flips in the
    same annulus interact only through shared sector edges and adjacent
    annuli share one ring, so annulus parity times sector parity gives
    at most four parallel layers regardless of patch size. Then one
    PERMUTATION group applies the ramped rotation (full `stride` inside
    the puncture ring, tapering by one per annulus, zero outside) that
    maps the flipped lattice back onto the canonical layout.

    Everything at or below the puncture ring rides the rotation
    rigidly; the center vertex is its fixed point, so a puncture at the
    center may spectate but a puncture anywhere else blocks the step
    (it would be dragged along or torn by the flips). Raises MoveError
    when the lattice is not canonical, the sector count is odd (no
    two-way parity layering), a spectator puncture sits off center, or
    there are not enough rings between the puncture and the pinned
    boundary.
    """
    rows, cols = _canonical_disk(lat)
    if anyon_id not in lat.punctures:
        raise MoveError(f"vertex {anyon_id} is not a puncture")
    if direction not in (-1, 1):
        raise MoveError("direction must be -1 or +1")
    if cols % 2:
        raise MoveError("sector count must be even for parallel layering")
    k = max(1, cols // 6) if stride is None else int(stride)
    if k < 1:
        raise MoveError("stride must be positive")
    base = _disk_coords(anyon_id, cols)[0] + 1
    for p in lat.punctures:
        # the rigid block would drag any off-center puncture along, and a
        # puncture in the sheared corridor would break the flip pattern;
        # only the rotation's fixed point is safe for spectators
        if p != anyon_id and _disk_coords(p, cols)[0] != 0:
            raise MoveError("shear is blocked by another off-center puncture")
    if base + k > rows:
        raise MoveError("not enough rings between the puncture and the boundary")

    # dry-run the flips; ids are stable so targets come from arithmetic
    layers: dict[tuple[int, int], list[MoveRecord]] = {}
    cur = lat
    for j in range(k):
        r = base + j
        for s in range(cols):
            if direction == -1:
                eid = _eid_diag(rows, cols, r, s)
            else:
                eid = _eid_spoke(rows, cols, r, s)
            cur, rec = pachner_22(cur, eid)
            layers.setdefault((j % 2, s % 2), []).append(rec)
    layer_order = [(0, 0), (0, 1), (1, 0), (1, 1)]
    local_layers = tuple(
        tuple(layers[key]) for key in layer_order if key in layers
    )

    vmap: dict[int, int] = {0: 0}
    for vid in lat.vertices:
        if vid == 0:
            continue
        r, s = _disk_coords(vid, cols)
        if r <= base:
            rho = direction * k
        elif r < base + k:
            rho = direction * (k - (r - base))
        else:
            rho = 0
        vmap[vid] = polar_vertex_id(cols, r, s + rho)
    target = build_planar_patch(rows, cols)
    sigma = sigma_from_vertex_map(cur, target, vmap)
    _, perm = apply_cpi(cur, sigma, target=target)
    grange = _cpi_grid_range(cur, vmap, cols)
    return MoveSchedule(
        (
            MoveGroup(LOCAL, local_layers, tag="shear flips"),
            MoveGroup(
                PERMUTATION, ((perm,),), target=target, range=grange, tag="shear rotation"
            ),
        )
    )


def braid_schedule(
    lat: SurfaceLattice,
    anyon_a: int,
    anyon_b: int,
    steps: int = 6,
    data: FusionData | None = None,
) -> MoveSchedule:
    """Wind anyon_a once counterclockwise around anyon_b.

    anyon_b must sit at the rotation center (the fixed point of every
    shear), anyon_a anywhere strictly outside it. The loop is `steps`
    equal shear steps of stride cols/steps, so the group count and the
    layer count per group are independent of the patch size; only the
    permutation range grows with the stride. The composite returns the
    lattice to its exact starting signature.
    """
    rows, cols = _canonical_disk(lat)
    if set(lat.punctures) != {anyon_a, anyon_b}:
        raise MoveError("braid needs exactly the two named punctures")
    if _disk_coords(anyon_b, cols)[0] != 0:
        raise MoveError("the stationary puncture must sit at the rotation center")
    ring_a = _disk_coords(anyon_a, cols)[0]
    if ring_a < 1:
        raise MoveError("the moving puncture must sit outside the center")
    if steps < 1 or cols % steps:
        raise MoveError("steps must divide the sector count")
    k = cols // steps
    if ring_a + 1 + k > rows:
        raise MoveError("not enough rings between the puncture and the boundary")

    groups: list[MoveGroup] = []
    cur = lat
    cur_a = anyon_a
    sec_a = _disk_coords(anyon_a, cols)[1]
    for _ in range(steps):
        step = shear_step(cur, cur_a, direction=-1, stride=k, data=data)
        groups.extend(step.groups)
        _, cur = run_schedule(None, cur, step, data=data)
        sec_a = (sec_a - k) % cols
        cur_a = polar_vertex_id(cols, ring_a, sec_a)
        if cur_a not in cur.punctures:
            raise MoveError("puncture tracking lost during braid")
    if cur.signature() != lat.signature():
        raise MoveError("braid did not return the lattice to its start")
    return MoveSchedule(tuple(groups))


def braid(
    state: StringNetState,
    lat: SurfaceLattice,
    anyon_a: int,
    anyon_b: int,
    steps: int = 6,
    data: FusionData | None = None,
) -> tuple[StringNetState, SurfaceLattice, DepthReport]:
    schedule = braid_schedule(lat, anyon_a, anyon_b, steps=steps, data=data)
    out, out_lat = run_schedule(state, lat, schedule, data=data)
    return out, out_lat, schedule.depth_report()


def baseline_schedule(
    lat: SurfaceLattice,
    anyon_id: int,
    path: Sequence[int],
    data: FusionData | None = None,
) -> MoveSchedule:
    """One stride-1 shear per hop along a ring path; linear in its length.

    path lists the target vertices in order; each must be the next
    sector over (either way around) on the anyon's own ring. An empty
    path is the empty schedule.
    """
    rows, cols = _canonical_disk(lat)
    if anyon_id not in lat.punctures:
        raise MoveError(f"vertex {anyon_id} is not a puncture")
    groups: list[MoveGroup] = []
    cur = lat
    cur_id = anyon_id
    for nxt in path:
        if nxt not in cur.vertices:
            raise MoveError(f"path vertex {nxt} is not on the lattice")
        r0, s0 = _disk_coords(cur_id, cols)
        r1, s1 = _disk_coords(nxt, cols)
        if r1 != r0:
            raise MoveError("path must stay on the puncture's ring")
        delta = (s1 - s0) % cols
        if delta == 1:
            direction = 1
        elif delta == cols - 1:
            direction = -1
        else:
            raise MoveError("path hops must move to an adjacent sector")
        if nxt in cur.punctures:
            raise MoveError("path runs into another puncture")
        step = shear_step(cur, cur_id, direction=direction, stride=1, data=data)
        groups.extend(step.groups)
        _, cur = run_schedule(None, cur, step, data=data)
        cur_id = nxt
        if cur_id not in cur.punctures:
            raise MoveError("puncture tracking lost along the path")
    return MoveSchedule(tuple(groups))


def sequential_baseline(
    state: StringNetState,
    lat: SurfaceLattice,
    anyon_id: int,
    path: Sequence[int],
    data: FusionData | None = None,
) -> tuple[StringNetState, SurfaceLattice]:
    schedule = baseline_schedule(lat, anyon_id, path, data=data)
    return run_schedule(state, lat, schedule, data=data)


# -- row splitting and merging ----------------------------------------------


def split_row(
    lat: SurfaceLattice,
    row_spec: int,
    data: FusionData | None = None,
) -> MoveSchedule:
    """Subdivide the annulus between rings row_spec and row_spec + 1.

    Every cell of the row is processed simultaneously: one 1-3 move per
    lower triangle, then three flip sweeps that knit the new vertices
    into a full ring. The result has the connectivity of a patch with
    one extra ring (fresh ids for the new ring, so the arithmetic layout
    no longer holds; merge_rows undoes it exactly). Five layers total in
    one LOCAL group, whatever the row length.

    The row must carry no punctures on either bounding ring, and the
    sector count must be even so the final sweep can two-color.
    """
    rows, cols = _canonical_disk(lat)
    try:
        r = int(row_spec)
    except (TypeError, ValueError):
        raise MoveError(f"row_spec must be a ring index, got {row_spec!r}") from None
    if not 1 <= r <= rows - 1:
        raise MoveError(f"no annulus row at ring {r}")
    if cols % 2:
        raise MoveError("sector count must be even for parallel layering")
    for s in range(cols):
        for rr in (r, r + 1):
            if polar_vertex_id(cols, rr, s) in lat.punctures:
                raise MoveError("cannot split a row that touches a puncture")

    cur = lat
    lay1: list[MoveRecord] = []
    new_vertices: list[int] = []
    for s in range(cols):
        tid = _tid_lower(rows, cols, r, s)
        want = {
            _eid_spoke(rows, cols, r, s),
            _eid_ring(rows, cols, r + 1, s),
            _eid_diag(rows, cols, r, s),
        }
        if set(cur.triangles[tid]) != want:
            raise MoveError("lattice does not have the canonical patch layout")
        cur, rec = pachner_13(cur, tid)
        lay1.append(rec)
        new_vertices.append(rec.vertex)

    lay2: list[MoveRecord] = []
    for s in range(cols):
        cur, rec = pachner_22(cur, _eid_diag(rows, cols, r, s))
        lay2.append(rec)
    lay3: list[MoveRecord] = []
    for s in range(cols):
        cur, rec = pachner_22(cur, _eid_spoke(rows, cols, r, s))
        lay3.append(rec)
    lay4: dict[int, list[MoveRecord]] = {0: [], 1: []}
    for s in range(cols):
        cur, rec = pachner_22(cur, _eid_diag(rows, cols, r, s))
        lay4[s % 2].append(rec)

    layers = (tuple(lay1), tuple(lay2), tuple(lay3), tuple(lay4[0]), tuple(lay4[1]))
    return MoveSchedule((MoveGroup(LOCAL, layers, tag="split row"),))


def _vertex_adjacency(lat: SurfaceLattice) -> dict[int, set[int]]:
    adj: dict[int, set[int]] = {v: set() for v in lat.vertices}
    for edge in lat.edges.values():
        adj[edge.v1].add(edge.v2)
        adj[edge.v2].add(edge.v1)
    return adj


def _order_ring(mids: list[int], adj: dict[int, set[int]]) -> list[int]:
    """Arrange the given vertices into their unique cyclic ring order."""
    mid_set = set(mids)
    start = min(mids)
    ring = [start]
    prev: int | None = None
    cur = start
    while len(ring) < len(mids):
        # never step back, and never close early; n == 2 rings are fine
        # because the loop ends before the walk would have to return
        nbrs = sorted((adj[cur] & mid_set) - {prev, start})
        if not nbrs:
            raise MoveError("rows are not mergeable: ring order broken")
        nxt = nbrs[0]
        ring.append(nxt)
        prev, cur = cur, nxt
    closed = start in adj[cur]
    degrees_ok = len(mids) == 2 or all(len(adj[v] & mid_set) == 2 for v in mids)
    if not (closed and degrees_ok):
        raise MoveError("rows are not mergeable: vertices do not form one ring")
    return ring


def _merge_chain(
    mids: list[int], adj: dict[int, set[int]]
) -> tuple[list[int], list[int]] | None:
    """Find the side chain a_s with spoke a_s-m_s and diagonal a_s-m_{s+1}.

    Returns (oriented mids, side chain) or None when no consistent side
    exists for this orientation. Tried for both ring orientations and
    both side candidates by the caller; candidates are scanned in sorted
    order so the choice is deterministic and, for a lattice produced by
    split_row, lands on the chain whose flips exactly invert the split.
    """
    n = len(mids)
    mid_set = set(mids)
    for x in sorted((adj[mids[0]] & adj[mids[1]]) - mid_set):
        chain = [x]
        ok = True
        for s in range(1, n):
            cand = (adj[chain[-1]] & adj[mids[s]]) - mid_set - set(chain)
            cand = {c for c in cand if mids[(s + 1) % n] in adj[c]}
            if len(cand) != 1:
                ok = False
                break
            chain.append(cand.pop())
        if not ok or len(set(chain)) != n:
            continue
        # closure: last side vertex must ring back to the first
        if chain[0] not in adj[chain[-1]]:
            continue
        good = all(
            mids[s] in adj[chain[s]] and mids[(s + 1) % n] in adj[chain[s]]
            for s in range(n)
        )
        if good:
            return mids, chain
    return None


def _resolve_edge(lat: SurfaceLattice, u: int, v: int, apexes: set[int]) -> int:
    """Edge id between u and v whose flip quad has exactly these apexes."""
    found = []
    tri_of = lat.edge_triangles()
    for eid, edge in lat.edges.items():
        if edge.endpoints() != frozenset((u, v)):
            continue
        tris = tri_of.get(eid, ())
        if len(tris) != 2:
            continue
        got = set()
        for tid in tris:
            for other in lat.triangles[tid]:
                got |= set(lat.edges[other].endpoints())
        if got - {u, v} == apexes:
            found.append(eid)
    if len(found) != 1:
        raise MoveError("rows are not mergeable: ambiguous or missing quad")
    return found[0]


def merge_rows(
    lat: SurfaceLattice,
    rows_spec: Iterable[int],
    data: FusionData | None = None,
) -> MoveSchedule:
    """Remove the ring of vertices in rows_spec, fusing its two rows.

    rows_spec lists the vertices of one full ring, in any order; they
    must each have the six-neighbor annulus structure with no punctures
    on or next to the ring. The schedule is one LOCAL group of five
    layers (two parity sweeps of diagonal flips, a ring-edge sweep, a
    second diagonal sweep, then a 3-1 move per vertex), so the depth is
    independent of the ring length. Applied to the output of split_row
    with the freshly created vertices, it restores the original lattice
    exactly, ids included.
    """
    mids = sorted(set(int(v) for v in rows_spec))
    if not mids:
        raise MoveError("empty row specification")
    if len(mids) < 2 or len(mids) % 2:
        raise MoveError("row ring must have even length >= 2")
    for v in mids:
        if v not in lat.vertices:
            raise MoveError(f"vertex {v} is not on the lattice")
    adj = _vertex_adjacency(lat)
    ordered = _order_ring(mids, adj)

    chain = None
    for orientation in (ordered, [ordered[0]] + list(reversed(ordered[1:]))):
        chain = _merge_chain(orientation, adj)
        if chain is not None:
            break
    if chain is None:
        raise MoveError("rows are not mergeable: no consistent side chain")
    mids, side = chain
    n = len(mids)

    # vertices adjacent to the ring across either row; conservative cover
    # of the upper row, exact identification happens per flip quad below
    across = set()
    for s in range(n):
        across |= (adj[mids[s]] & adj[mids[(s + 1) % n]]) - set(mids) - set(side)
    for v in set(mids) | set(side) | across:
        if v in lat.punctures:
            raise MoveError("cannot merge rows that touch a puncture")

    # resolve every edge of a layer against the pre-layer lattice, then
    # flip; in-layer flips can create parallel edges with identical quads
    # (n == 2), so resolving mid-layer would be ambiguous
    cur = lat
    diag_ids = [
        _resolve_edge(cur, side[s], mids[(s + 1) % n], {mids[s], side[(s + 1) % n]})
        for s in range(n)
    ]
    lay1: dict[int, list[MoveRecord]] = {0: [], 1: []}
    for s in range(n):
        cur, rec = pachner_22(cur, diag_ids[s])
        if cur.edges[diag_ids[s]].endpoints() != frozenset(
            (mids[s], side[(s + 1) % n])
        ):
            raise MoveError("rows are not mergeable: unexpected flip result")
        lay1[s % 2].append(rec)

    # ring edges are matched to cells through their quads, not endpoints;
    # with n == 2 the two ring edges are parallel and only the quad tells
    # them apart. The far-row vertex of each cell falls out of the match.
    far: list[int | None] = [None] * n
    ring_ids: list[int] = []
    blocked = set(mids) | set(side)
    tri_of = cur.edge_triangles()
    for s in range(n):
        m_next = mids[(s + 1) % n]
        want_side = side[(s + 1) % n]
        found: list[tuple[int, int]] = []
        for eid, edge in cur.edges.items():
            if edge.endpoints() != frozenset((mids[s], m_next)):
                continue
            tris = tri_of.get(eid, ())
            if len(tris) != 2:
                continue
            corners = set()
            for tid in tris:
                for other in cur.triangles[tid]:
                    corners |= set(cur.edges[other].endpoints())
            apexes = corners - {mids[s], m_next}
            others = apexes - {want_side}
            if want_side in apexes and len(others) == 1 and not (others & blocked):
                found.append((eid, others.pop()))
        if len(found) != 1:
            raise MoveError("rows are not mergeable: ambiguous or missing quad")
        eid, far_v = found[0]
        far[(s + 1) % n] = far_v
        ring_ids.append(eid)
    if len(set(ring_ids)) != n:
        raise MoveError("rows are not mergeable: ambiguous or missing quad")
    lay2: list[MoveRecord] = []
    for s in range(n):
        cur, rec = pachner_22(cur, ring_ids[s])
        want = frozenset((side[(s + 1) % n], far[(s + 1) % n]))
        if cur.edges[ring_ids[s]].endpoints() != want:
            raise MoveError("rows are not mergeable: unexpected flip result")
        lay2.append(rec)
    lay3: list[MoveRecord] = []
    for s in range(n):
        eid = diag_ids[s]
        cur, rec = pachner_22(cur, eid)
        want = frozenset((side[s], far[(s + 1) % n]))
        if cur.edges[eid].endpoints() != want:
            raise MoveError("rows are not mergeable: unexpected flip result")
        lay3.append(rec)
    lay4: list[MoveRecord] = []
    for s in range(n):
        cur, rec = pachner_31(cur, mids[s])
        lay4.append(rec)

    layers = (
        tuple(lay1[0]),
        tuple(lay1[1]),
        tuple(lay2),
        tuple(lay3),
        tuple(lay4),
    )
    return MoveSchedule((MoveGroup(LOCAL, layers, tag="merge rows"),))


# -- logical action -----------------------------------------------------------


def _axpy(
    lat: SurfaceLattice, a: StringNetState, b: StringNetState, coeff: complex
) -> StringNetState:
    cfg = np.concatenate([a.configs, b.configs])
    amp = np.concatenate([a.amps, coeff * b.amps])
    return make_state(lat, cfg, amp)


def _scaled(lat: SurfaceLattice, a: StringNetState, coeff: complex) -> StringNetState:
    return make_state(lat, a.configs, coeff * a.amps)


def encoded_basis(
    lat: SurfaceLattice,
    data: FusionData | None = None,
    max_seeds: int = 12,
    max_edges: int = 30,
) -> list[StringNetState]:
    """Orthonormal basis of the encoded subspace, by seeded projection.

    Delta states on a deterministic spread of valid configurations are
    ground-projected and Gram-Schmidt filtered; seeds whose projection
    is (numerically) inside the span already found are dropped. The
    spread covers the configuration list evenly, which in practice hits
    every encoded sector; raise max_seeds if a protocol reports a
    smaller dimension than code_space_dim does.
    """
    data = fibonacci_data() if data is None else data
    nq = len(lat.qubit_slots())
    if nq > max_edges:
        raise MoveError(f"lattice has {nq} qubits, above the dense limit {max_edges}")
    configs = enumerate_valid_configs(lat, data, max_qubits=max(nq, 40))
    if configs.size == 0:
        raise MoveError("lattice admits no valid configurations")
    step = max(1, configs.size // max_seeds)
    basis: list[StringNetState] = []
    for cfg in configs[::step][:max_seeds]:
        cand = ground_project(make_delta_state(lat, int(cfg)), lat, data)
        full = cand.norm()
        if full <= 1e-13:
            continue
        for b in basis:
            cand = _axpy(lat, cand, b, -inner(b, cand))
        res = cand.norm()
        if res <= 1e-6 * full:
            continue
        if len(basis) == 8:
            raise MoveError("encoded dimension exceeds 8")
        basis.append(_scaled(lat, cand, 1.0 / res))
    if not basis:
        raise MoveError("encoded dimension is 0")
    return basis


def logical_action(
    protocol: MoveSchedule | Callable,
    lat: SurfaceLattice,
    data: FusionData | None = None,
    tol: float = 1e-8,
    max_seeds: int = 12,
    max_edges: int = 30,
    basis: Sequence[StringNetState] | None = None,
) -> np.ndarray:
    """Matrix of a closed protocol on an orthonormal encoded basis.

    protocol is a MoveSchedule, or a callable taking (state, lattice)
    and returning at least (state, lattice); it must end on a lattice
    with the same signature it started from. The basis defaults to
    encoded_basis(lat, ...); pass one explicitly to amortize its cost
    across several protocols on the same lattice. Entry [i, j] is the
    overlap of basis state i with the protocol applied to basis state
    j. Raises MoveError when the encoded dimension is 0 or above 8, or
    when the resulting matrix fails unitarity at tol (a sign the
    protocol leaks out of the encoded subspace).
    """
    data = fibonacci_data() if data is None else data
    if basis is None:
        basis = encoded_basis(lat, data=data, max_seeds=max_seeds, max_edges=max_edges)
    dim = len(basis)
    mat = np.zeros((dim, dim), dtype=np.complex128)
    for j, b in enumerate(basis):
        if isinstance(protocol, MoveSchedule):
            out = run_schedule(b, lat, protocol, data=data)
        else:
            out = protocol(b, lat)
        out_state = rebind_state(out[0], lat)
        for i, bi in enumerate(basis):
            mat[i, j] = inner(bi, out_state)
    dev = float(np.max(np.abs(mat.conj().T @ mat - np.eye(dim))))
    if dev > tol:
        raise MoveError(f"logical action is not unitary (deviation {dev:.3e})")
    return mat
