"""Triangulated surfaces with qubit-bearing edges and their rewrites.

The primal object is a triangulation (vertices with layout positions,
edges, triangles); the dual trivalent graph has one vertex per triangle
and is never stored separately, since every triangle is a triple of edge
ids. Qubits live on edges: each edge either carries a stable qubit slot
id or is pinned to the vacuum label (smooth boundary edges).

Plaquettes sit at interior primal vertices: the plaquette boundary is the
cyclic fan of edges incident to the vertex, and each consecutive boundary
pair has a leg, the opposite edge of the triangle joining them.

Rewrites (2-2 flip, 1-3 subdivision, 3-1 removal, qubit permutations) are
value-semantic: they return a new lattice with a bumped version counter
plus a MoveRecord that can replay the rewrite deterministically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

F_MOVE = "F_MOVE"
PACHNER_13 = "PACHNER_13"
PACHNER_31 = "PACHNER_31"
LOCAL_SWAP = "LOCAL_SWAP"
PERMUTATION = "PERMUTATION"


class MoveError(ValueError):
    """A rewrite precondition failed."""


@dataclass(frozen=True)
class Edge:
    v1: int
    v2: int
    qubit: Optional[int]  # None = pinned to the vacuum label

    def __post_init__(self):
        # undirected; canonical endpoint order keeps signatures comparable
        if self.v1 > self.v2:
            lo, hi = self.v2, self.v1
            object.__setattr__(self, "v1", lo)
            object.__setattr__(self, "v2", hi)

    @property
    def pinned(self) -> bool:
        return self.qubit is None

    def endpoints(self) -> frozenset[int]:
        return frozenset((self.v1, self.v2))


@dataclass(frozen=True)
class MoveRecord:
    kind: str
    edge: Optional[int] = None
    legs: tuple[int, ...] = ()
    triangles: tuple[int, ...] = ()
    vertex: Optional[int] = None
    new_edges: tuple[int, ...] = ()
    new_triangles: tuple[int, ...] = ()
    new_slots: tuple[int, ...] = ()
    released_slots: tuple[int, ...] = ()
    sigma: Optional[dict[int, int]] = None
    range: float = 0.0
    qubits: tuple[int, ...] = ()

    def to_jsonable(self) -> dict:
        doc: dict = {"kind": self.kind}
        if self.edge is not None:
            doc["edge"] = self.edge
        if self.legs:
            doc["legs"] = list(self.legs)
        if self.triangles:
            doc["triangles"] = list(self.triangles)
        if self.vertex is not None:
            doc["vertex"] = self.vertex
        if self.new_edges:
            doc["new_edges"] = list(self.new_edges)
        if self.new_triangles:
            doc["new_triangles"] = list(self.new_triangles)
        if self.new_slots:
            doc["new_slots"] = list(self.new_slots)
        if self.released_slots:
            doc["released_slots"] = list(self.released_slots)
        if self.sigma is not None:
            doc["sigma"] = {str(k): v for k, v in sorted(self.sigma.items())}
        if self.kind == PERMUTATION or self.range:
            doc["range"] = self.range
        if self.qubits:
            doc["qubits"] = list(self.qubits)
        return doc


@dataclass(frozen=True)
class Plaquette:
    """Cyclic fan around an interior vertex.

    boundary[i] and boundary[i+1] are joined by fan triangle i whose
    remaining edge is legs[i]; lists have equal length n >= 2.
    """

    vertex: int
    boundary: tuple[int, ...]
    legs: tuple[int, ...]
    fan_triangles: tuple[int, ...]


@dataclass
class SurfaceLattice:
    topology: str  # sphere | torus | disk
    vertices: dict[int, tuple[float, float]]
    edges: dict[int, Edge]
    triangles: dict[int, tuple[int, int, int]]
    punctures: frozenset[int] = field(default_factory=frozenset)
    version: int = 0

    # ---- derived structure -------------------------------------------------

    def edge_triangles(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {e: [] for e in self.edges}
        for t, es in sorted(self.triangles.items()):
            for e in es:
                out[e].append(t)
        return out

    def vertex_edges(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {v: [] for v in self.vertices}
        for e, rec in sorted(self.edges.items()):
            out[rec.v1].append(e)
            if rec.v2 != rec.v1:
                out[rec.v2].append(e)
        return out

    def qubit_slots(self) -> list[int]:
        return sorted(rec.qubit for rec in self.edges.values() if rec.qubit is not None)

    def slot_edge_map(self) -> dict[int, int]:
        return {rec.qubit: e for e, rec in self.edges.items() if rec.qubit is not None}

    def edge_between(self, u: int, v: int) -> Optional[int]:
        want = frozenset((u, v))
        for e, rec in sorted(self.edges.items()):
            if rec.endpoints() == want:
                return e
        return None

    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges) + len(self.triangles)

    def boundary_edge_ids(self) -> set[int]:
        et = self.edge_triangles()
        return {e for e, ts in et.items() if len(ts) == 1}

    def edge_midpoint(self, e: int) -> tuple[float, float]:
        rec = self.edges[e]
        (x1, y1), (x2, y2) = self.vertices[rec.v1], self.vertices[rec.v2]
        return ((x1 + x2) / 2.0, (y1 + y2) / 2.0)

    def signature(self) -> tuple:
        """Structural identity: states bound to equal signatures are
        interoperable even if version counters differ."""
        return (
            self.topology,
            tuple(sorted((e, r.v1, r.v2, r.qubit if r.qubit is not None else -1) for e, r in self.edges.items())),
            tuple(sorted((t, tuple(sorted(es))) for t, es in self.triangles.items())),
            tuple(sorted(self.punctures)),
        )

    def check(self) -> None:
        """Basic sanity: each edge in 1 or 2 triangles, triangles well formed."""
        et = self.edge_triangles()
        for e, ts in et.items():
            if not 1 <= len(ts) <= 2:
                raise MoveError(f"edge {e} lies in {len(ts)} triangles")
        for t, es in self.triangles.items():
            if len(set(es)) != 3:
                raise MoveError(f"triangle {t} has repeated edges {es}")
            vs: set[int] = set()
            for e in es:
                vs |= set(self.edges[e].endpoints())
            if len(vs) != 3:
                raise MoveError(f"triangle {t} does not span 3 vertices")
        for p in self.punctures:
            if self.plaquette(p) is None:
                raise MoveError(f"puncture {p} is not an interior plaquette")

    # ---- plaquettes ---------------------------------------------------------

    def plaquette(self, vertex: int) -> Optional[Plaquette]:
        """Closed fan at the vertex, or None for boundary vertices."""
        incident = [e for e in self.vertex_edges().get(vertex, []) if True]
        if len(incident) < 2:
            return None
        et = self.edge_triangles()
        # triangles at the vertex, with their two vertex-edges
        tri_pair: dict[int, list[int]] = {}
        for e in incident:
            for t in et[e]:
                tri_pair.setdefault(t, []).append(e)
        for t, pair in tri_pair.items():
            if len(pair) != 2:
                return None  # a triangle meets the vertex in one edge only: malformed fan
        # each incident edge must join exactly two fan triangles, else the fan is open
        edge_tris: dict[int, list[int]] = {e: [] for e in incident}
        for t, pair in tri_pair.items():
            for e in pair:
                edge_tris[e].append(t)
        if any(len(ts) != 2 for ts in edge_tris.values()):
            return None
        start = min(incident)
        boundary = [start]
        fan: list[int] = []
        tri = min(edge_tris[start])
        while True:
            fan.append(tri)
            a, b = tri_pair[tri]
            nxt = b if a == boundary[-1] else a
            if nxt == start:
                break
            boundary.append(nxt)
            t1, t2 = edge_tris[nxt]
            tri = t2 if t1 == tri else t1
            if len(boundary) > len(incident):
                return None
        if len(boundary) != len(incident):
            return None  # fan does not cover all incident edges
        legs = []
        for t in fan:
            third = [e for e in self.triangles[t] if e not in tri_pair[t]]
            legs.append(third[0])
        return Plaquette(vertex=vertex, boundary=tuple(boundary), legs=tuple(legs), fan_triangles=tuple(fan))

    def plaquette_vertices(self) -> list[int]:
        return [v for v in sorted(self.vertices) if self.plaquette(v) is not None]

    def _bump(self, **changes) -> "SurfaceLattice":
        out = replace_lattice(self, **changes)
        out.version = self.version + 1
        return out


def replace_lattice(lat: SurfaceLattice, **changes) -> SurfaceLattice:
    return SurfaceLattice(
        topology=changes.get("topology", lat.topology),
        vertices=dict(changes.get("vertices", lat.vertices)),
        edges=dict(changes.get("edges", lat.edges)),
        triangles=dict(changes.get("triangles", lat.triangles)),
        punctures=frozenset(changes.get("punctures", lat.punctures)),
        version=changes.get("version", lat.version),
    )


# ---- builders ---------------------------------------------------------------


def build_theta_sphere() -> SurfaceLattice:
    """Two triangles glued along all three edges: dual graph is the theta
    graph (2 trivalent vertices, 3 parallel edges)."""
    vertices = {0: (0.0, 0.0), 1: (1.0, 0.0), 2: (0.5, math.sqrt(3.0) / 2.0)}
    edges = {
        0: Edge(0, 1, 0),
        1: Edge(1, 2, 1),
        2: Edge(0, 2, 2),
    }
    triangles = {0: (0, 1, 2), 1: (0, 1, 2)}
    lat = SurfaceLattice("sphere", vertices, edges, triangles)
    lat.check()
    return lat


def build_tetra_sphere() -> SurfaceLattice:
    """Boundary of a tetrahedron; the smallest sphere where flips apply."""
    vertices = {
        0: (0.0, 0.0),
        1: (2.0, 0.0),
        2: (1.0, math.sqrt(3.0)),
        3: (1.0, 0.577),
    }
    # edges 0..5: (01) (02) (03) (12) (13) (23)
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    edges = {i: Edge(u, v, i) for i, (u, v) in enumerate(pairs)}
    idx = {frozenset(p): i for i, p in enumerate(pairs)}

    def tri(u, v, w):
        return (idx[frozenset((u, v))], idx[frozenset((v, w))], idx[frozenset((u, w))])

    triangles = {0: tri(0, 1, 2), 1: tri(0, 1, 3), 2: tri(0, 2, 3), 3: tri(1, 2, 3)}
    lat = SurfaceLattice("sphere", vertices, edges, triangles)
    lat.check()
    return lat


def build_honeycomb_torus(lx: int, ly: int) -> SurfaceLattice:
    """Triangular lattice on the torus; the dual is the honeycomb with
    2*lx*ly trivalent vertices, 3*lx*ly edges, lx*ly plaquettes."""
    if lx < 2 or ly < 2:
        raise MoveError("honeycomb torus needs lx >= 2 and ly >= 2")
    nv = lx * ly

    def vid(i, j):
        return (i % lx) + lx * (j % ly)

    vertices = {vid(i, j): (i + 0.5 * j, j * math.sqrt(3.0) / 2.0) for j in range(ly) for i in range(lx)}
    edges: dict[int, Edge] = {}
    eid: dict[tuple[str, int, int], int] = {}
    k = 0
    for j in range(ly):
        for i in range(lx):
            for kind, (di, dj) in (("h", (1, 0)), ("v", (0, 1)), ("d", (1, 1))):
                edges[k] = Edge(vid(i, j), vid(i + di, j + dj), k)
                eid[(kind, i, j)] = k
                k += 1
    triangles: dict[int, tuple[int, int, int]] = {}
    t = 0
    for j in range(ly):
        for i in range(lx):
            # lower: (i,j) (i+1,j) (i+1,j+1); upper: (i,j) (i,j+1) (i+1,j+1)
            triangles[t] = (eid[("h", i, j)], eid[("v", (i + 1) % lx, j)], eid[("d", i, j)])
            triangles[t + 1] = (eid[("v", i, j)], eid[("h", i, (j + 1) % ly)], eid[("d", i, j)])
            t += 2
    lat = SurfaceLattice("torus", vertices, edges, triangles)
    assert lat.euler_characteristic() == 0
    lat.check()
    return lat


def polar_vertex_id(cols: int, ring: int, sector: int) -> int:
    """Vertex addressing on the planar patch: ring 0 is the center."""
    if ring == 0:
        return 0
    return 1 + (ring - 1) * cols + (sector % cols)


def polar_position(cols: int, ring: int, sector: int) -> tuple[float, float]:
    if ring == 0:
        return (0.0, 0.0)
    radius = cols / (2.0 * math.pi) + 0.5 * ring
    ang = 2.0 * math.pi * (sector % cols) / cols
    return (radius * math.cos(ang), radius * math.sin(ang))


def build_planar_patch(
    rows: int, cols: int, punctures: Iterable[tuple[int, int]] = ()
) -> SurfaceLattice:
    """Triangulated disk: a center vertex plus `rows` concentric rings of
    `cols` sectors. The outermost ring is the smooth boundary; its ring
    edges are pinned to the vacuum and carry no qubit. Each annulus cell
    has one diagonal (r, s) -> (r+1, s+1), so azimuthal transport is a
    pure layer of flips plus a rotation.

    Punctures are (ring, sector) plaquette coordinates; (0, *) is the
    center plaquette.
    """
    m, n = rows, cols
    if m < 2 or n < 2:
        # n == 2 gives parallel ring edges per ring, like the theta sphere;
        # every derived structure handles that, so only n < 2 is malformed
        raise MoveError("planar patch needs rows >= 2 and cols >= 2")
    vertices: dict[int, tuple[float, float]] = {0: (0.0, 0.0)}
    for r in range(1, m + 1):
        for s in range(n):
            vertices[polar_vertex_id(n, r, s)] = polar_position(n, r, s)

    edges: dict[int, Edge] = {}
    eid: dict[tuple[str, int, int], int] = {}
    k = 0
    slot = 0

    def add(kind, r, s, u, v, pinned=False):
        nonlocal k, slot
        edges[k] = Edge(u, v, None if pinned else slot)
        eid[(kind, r, s)] = k
        k += 1
        if not pinned:
            slot += 1

    for s in range(n):  # center spokes
        add("spoke", 0, s, 0, polar_vertex_id(n, 1, s))
    for r in range(1, m + 1):  # ring edges; outermost pinned
        for s in range(n):
            add(
                "ring", r, s,
                polar_vertex_id(n, r, s), polar_vertex_id(n, r, s + 1),
                pinned=(r == m),
            )
    for r in range(1, m):  # radial spokes
        for s in range(n):
            add("spoke", r, s, polar_vertex_id(n, r, s), polar_vertex_id(n, r + 1, s))
    for r in range(1, m):  # diagonals
        for s in range(n):
            add("diag", r, s, polar_vertex_id(n, r, s), polar_vertex_id(n, r + 1, s + 1))

    triangles: dict[int, tuple[int, int, int]] = {}
    t = 0
    for s in range(n):  # center fan
        triangles[t] = (eid[("spoke", 0, s)], eid[("spoke", 0, (s + 1) % n)], eid[("ring", 1, s)])
        t += 1
    for r in range(1, m):
        for s in range(n):
            # lower: (r,s) (r+1,s) (r+1,s+1)
            triangles[t] = (eid[("spoke", r, s)], eid[("ring", r + 1, s)], eid[("diag", r, s)])
            # upper: (r,s) (r,s+1) (r+1,s+1)
            triangles[t + 1] = (eid[("ring", r, s)], eid[("diag", r, s)], eid[("spoke", r, (s + 1) % n)])
            t += 2

    marked: set[int] = set()
    for ring, sector in punctures:
        if not (0 <= ring <= m - 1):
            raise MoveError(f"puncture ring {ring} outside the interior (0..{m - 1})")
        marked.add(polar_vertex_id(n, ring, sector))
    if len(marked) != len(list(punctures)):
        raise MoveError("duplicate punctures")

    lat = SurfaceLattice("disk", vertices, edges, triangles, punctures=frozenset(marked))
    # pairwise non-adjacent: no lattice edge joins two punctures
    for rec in lat.edges.values():
        if rec.v1 in marked and rec.v2 in marked:
            raise MoveError(f"adjacent punctures {rec.v1}, {rec.v2}")
    assert lat.euler_characteristic() == 1
    lat.check()
    return lat


# ---- rewrites ----------------------------------------------------------------


def _flip_roles(lat: SurfaceLattice, edge_id: int):
    """Quadrilateral data for a 2-2 flip; raises MoveError when degenerate."""
    if edge_id not in lat.edges:
        raise MoveError(f"no edge {edge_id}")
    rec = lat.edges[edge_id]
    if rec.pinned:
        raise MoveError(f"edge {edge_id} is pinned (boundary)")
    ts = lat.edge_triangles()[edge_id]
    if len(ts) != 2:
        raise MoveError(f"edge {edge_id} is a boundary edge")
    t1, t2 = sorted(ts)
    e1 = [e for e in lat.triangles[t1] if e != edge_id]
    e2 = [e for e in lat.triangles[t2] if e != edge_id]
    if set(e1) & set(e2):
        raise MoveError(f"edge {edge_id}: triangles share a second edge (degenerate quad)")
    u, v = sorted((rec.v1, rec.v2))

    def apex(pair):
        vs = set(lat.edges[pair[0]].endpoints()) & set(lat.edges[pair[1]].endpoints())
        vs -= {u, v}
        if len(vs) != 1:
            raise MoveError(f"edge {edge_id}: degenerate apex")
        return vs.pop()

    w1, w2 = apex(e1), apex(e2)
    if w1 == w2:
        raise MoveError(f"edge {edge_id}: both apexes coincide (degenerate quad)")

    def at(pair, vertex):
        hit = [e for e in pair if vertex in lat.edges[e].endpoints()]
        if len(hit) != 1:
            raise MoveError(f"edge {edge_id}: ambiguous quad sides")
        return hit[0]

    # leg roles as used by the amplitude rule: a,b in t1 at v,u; c,d in t2 at u,v
    a, b = at(e1, v), at(e1, u)
    c, d = at(e2, u), at(e2, v)
    for corner in (u, v, w1, w2):
        if corner in lat.punctures:
            raise MoveError(f"edge {edge_id}: flip touches puncture plaquette {corner}")
    return t1, t2, u, v, w1, w2, a, b, c, d


def pachner_22(lat: SurfaceLattice, edge_id: int) -> tuple[SurfaceLattice, MoveRecord]:
    """Flip an interior edge across its quadrilateral; counts conserved."""
    t1, t2, u, v, w1, w2, a, b, c, d = _flip_roles(lat, edge_id)
    rec = lat.edges[edge_id]
    edges = dict(lat.edges)
    edges[edge_id] = Edge(min(w1, w2), max(w1, w2), rec.qubit)
    triangles = dict(lat.triangles)
    # id handoff: the face at the lower old endpoint inherits the id of the
    # old face with the lower apex, so flipping the same edge twice is the
    # identity on triangle ids, not just up to isomorphism
    face_u, face_v = (edge_id, b, c), (edge_id, a, d)
    if w1 < w2:
        triangles[t1], triangles[t2] = face_u, face_v
    else:
        triangles[t1], triangles[t2] = face_v, face_u
    out = lat._bump(edges=edges, triangles=triangles)
    qubits = tuple(lat.edges[e].qubit if lat.edges[e].qubit is not None else -1 for e in (edge_id, a, b, c, d))
    record = MoveRecord(kind=F_MOVE, edge=edge_id, legs=(a, b, c, d), triangles=(t1, t2), qubits=qubits)
    return out, record


def pachner_13(lat: SurfaceLattice, triangle_id: int) -> tuple[SurfaceLattice, MoveRecord]:
    """Subdivide a triangle: one new vertex, three new qubit edges."""
    if triangle_id not in lat.triangles:
        raise MoveError(f"no triangle {triangle_id}")
    es = lat.triangles[triangle_id]
    if len(set(es)) != 3:
        raise MoveError(f"triangle {triangle_id} is degenerate")
    b_e, a_e, c_e = sorted(es)[0], sorted(es)[1], sorted(es)[2]
    corners: set[int] = set()
    for e in es:
        corners |= set(lat.edges[e].endpoints())
    if len(corners) != 3:
        raise MoveError(f"triangle {triangle_id} does not span 3 corners")
    for vtx in corners:
        if vtx in lat.punctures:
            raise MoveError(f"triangle {triangle_id} touches puncture plaquette {vtx}")

    def opposite(e):
        (other,) = corners - set(lat.edges[e].endpoints())
        return other

    p, q, r = opposite(a_e), opposite(b_e), opposite(c_e)
    w = max(lat.vertices) + 1
    px = sum(lat.vertices[vv][0] for vv in corners) / 3.0
    py = sum(lat.vertices[vv][1] for vv in corners) / 3.0

    next_edge = max(lat.edges) + 1
    slots = lat.qubit_slots()
    next_slot = (slots[-1] + 1) if slots else 0
    d_e, e_e, f_e = next_edge, next_edge + 1, next_edge + 2
    new_slots = (next_slot, next_slot + 1, next_slot + 2)

    edges = dict(lat.edges)
    edges[d_e] = Edge(min(w, p), max(w, p), new_slots[0])
    edges[e_e] = Edge(min(w, r), max(w, r), new_slots[1])
    edges[f_e] = Edge(min(w, q), max(w, q), new_slots[2])

    next_tri = max(lat.triangles) + 1
    triangles = dict(lat.triangles)
    triangles[triangle_id] = (a_e, f_e, e_e)
    triangles[next_tri] = (b_e, e_e, d_e)
    triangles[next_tri + 1] = (c_e, d_e, f_e)

    vertices = dict(lat.vertices)
    vertices[w] = (px, py)
    out = lat._bump(vertices=vertices, edges=edges, triangles=triangles)
    record = MoveRecord(
        kind=PACHNER_13,
        triangles=(triangle_id,),
        legs=(a_e, b_e, c_e),
        vertex=w,
        new_edges=(d_e, e_e, f_e),
        new_triangles=(triangle_id, next_tri, next_tri + 1),
        new_slots=new_slots,
    )
    return out, record


def pachner_31_roles(lat: SurfaceLattice, vertex_id: int):
    """Role assignment for removing a degree-3 vertex; mirrors pachner_13."""
    if vertex_id not in lat.vertices:
        raise MoveError(f"no vertex {vertex_id}")
    incident = lat.vertex_edges()[vertex_id]
    if len(incident) != 3:
        raise MoveError(f"vertex {vertex_id} has degree {len(incident)}, need 3")
    et = lat.edge_triangles()
    tris = sorted({t for e in incident for t in et[e]})
    if len(tris) != 3:
        raise MoveError(f"vertex {vertex_id} is not enclosed by 3 triangles")
    outer = []
    for t in tris:
        rest = [e for e in lat.triangles[t] if e not in incident]
        if len(rest) != 1:
            raise MoveError(f"vertex {vertex_id}: triangle {t} malformed for removal")
        outer.append(rest[0])
    if len(set(outer)) != 3:
        raise MoveError(f"vertex {vertex_id}: outer edges not distinct")
    b_e, a_e, c_e = sorted(outer)[0], sorted(outer)[1], sorted(outer)[2]
    corners: set[int] = set()
    for e in outer:
        corners |= set(lat.edges[e].endpoints())
    corners -= {vertex_id}
    if len(corners) != 3:
        raise MoveError(f"vertex {vertex_id}: outer edges do not form a triangle")
    for vtx in corners:
        if vtx in lat.punctures:
            raise MoveError(f"vertex {vertex_id}: removal touches puncture plaquette {vtx}")

    def opposite(e):
        (other,) = corners - set(lat.edges[e].endpoints())
        return other

    p, q, r = opposite(a_e), opposite(b_e), opposite(c_e)

    def spoke(target):
        hit = [e for e in incident if target in lat.edges[e].endpoints()]
        if len(hit) != 1:
            raise MoveError(f"vertex {vertex_id}: spokes ambiguous")
        return hit[0]

    d_e, e_e, f_e = spoke(p), spoke(r), spoke(q)
    return tris, (a_e, b_e, c_e), (d_e, e_e, f_e)


def pachner_31(lat: SurfaceLattice, vertex_id: int) -> tuple[SurfaceLattice, MoveRecord]:
    """Remove a degree-3 vertex; inverse of pachner_13."""
    tris, (a_e, b_e, c_e), (d_e, e_e, f_e) = pachner_31_roles(lat, vertex_id)
    released = tuple(lat.edges[e].qubit for e in (d_e, e_e, f_e))
    if any(s is None for s in released):
        raise MoveError(f"vertex {vertex_id}: spokes include a pinned edge")
    edges = dict(lat.edges)
    for e in (d_e, e_e, f_e):
        del edges[e]
    triangles = dict(lat.triangles)
    for t in tris:
        del triangles[t]
    triangles[tris[0]] = (a_e, b_e, c_e)
    vertices = dict(lat.vertices)
    del vertices[vertex_id]
    out = lat._bump(vertices=vertices, edges=edges, triangles=triangles)
    record = MoveRecord(
        kind=PACHNER_31,
        vertex=vertex_id,
        legs=(a_e, b_e, c_e),
        new_edges=(d_e, e_e, f_e),
        triangles=tuple(tris),
        new_triangles=(tris[0],),
        released_slots=tuple(int(s) for s in released),
    )
    return out, record


# ---- connectivity-preserving qubit permutations -------------------------------


def _induced_vertex_map(
    source: SurfaceLattice, target: SurfaceLattice, edge_image: dict[int, int]
) -> dict[int, int]:
    """Vertex bijection consistent with a prescribed qubit-edge bijection.

    Every source vertex candidate set starts as the intersection of its
    incident image-edge endpoint sets; constraint propagation plus a small
    backtracking pass settles symmetric leftovers. Raises MoveError when
    no consistent assignment exists (the CPI rejection path).
    """
    ve = source.vertex_edges()
    cand: dict[int, set[int]] = {}
    for v in source.vertices:
        sets = []
        for e in ve[v]:
            if e in edge_image:
                img = target.edges[edge_image[e]]
                sets.append(set(img.endpoints()))
        if not sets:
            cand[v] = set(target.vertices)
        else:
            cur = sets[0]
            for s in sets[1:]:
                cur = cur & s
            cand[v] = cur
        if not cand[v]:
            raise MoveError(f"no image vertex consistent with edges at vertex {v}")

    order = sorted(source.vertices, key=lambda v: (len(cand[v]), v))
    assign: dict[int, int] = {}
    used: set[int] = set()

    def consistent(v, img):
        for e in ve[v]:
            if e not in edge_image:
                continue
            rec = source.edges[e]
            other = rec.v2 if rec.v1 == v else rec.v1
            timg = target.edges[edge_image[e]]
            allowed = set(timg.endpoints())
            if img not in allowed:
                return False
            if other in assign:
                want = allowed - {img} if len(allowed) == 2 else allowed
                if rec.v1 == rec.v2:
                    continue
                if assign[other] not in want:
                    return False
        return True

    def dfs(i):
        if i == len(order):
            return True
        v = order[i]
        for img in sorted(cand[v]):
            if img in used or not consistent(v, img):
                continue
            assign[v] = img
            used.add(img)
            if dfs(i + 1):
                return True
            del assign[v]
            used.discard(img)
        return False

    if not dfs(0):
        raise MoveError("qubit permutation does not preserve connectivity")
    return assign


def apply_cpi(
    lat: SurfaceLattice,
    sigma: dict[int, int],
    target: Optional[SurfaceLattice] = None,
) -> tuple[SurfaceLattice, MoveRecord]:
    """Relocate qubits by the slot bijection sigma.

    sigma maps each qubit slot of `lat` to a slot of the target layout
    (default: `lat` itself). Accepted only when the induced edge map is a
    connectivity-preserving isomorphism: every edge of the source maps to
    an edge of the target. Punctures ride the induced vertex map. The
    reported range is the maximum Euclidean qubit displacement.
    """
    tgt = target if target is not None else lat
    slots = lat.qubit_slots()
    full = {s: sigma.get(s, s) for s in slots}
    if sorted(full.values()) != sorted(tgt.qubit_slots()):
        raise MoveError("sigma is not a bijection onto the target qubit slots")
    src_of = lat.slot_edge_map()
    tgt_of = tgt.slot_edge_map()
    edge_image = {src_of[s]: tgt_of[full[s]] for s in slots}
    vmap = _induced_vertex_map(lat, tgt, edge_image)

    # every edge, pinned ones included, must land on a target edge
    tgt_pairs: dict[frozenset[int], list[int]] = {}
    for e, rec in tgt.edges.items():
        tgt_pairs.setdefault(rec.endpoints(), []).append(e)
    for e, rec in lat.edges.items():
        want = frozenset((vmap[rec.v1], vmap[rec.v2]))
        if e in edge_image:
            img = tgt.edges[edge_image[e]]
            if img.endpoints() != want:
                raise MoveError(f"edge {e} image endpoints disagree with the vertex map")
        else:
            hits = [x for x in tgt_pairs.get(want, []) if tgt.edges[x].pinned]
            if not hits:
                raise MoveError(f"pinned edge {e} has no pinned image in the target")

    rng = 0.0
    for s in slots:
        (x1, y1) = lat.edge_midpoint(src_of[s])
        (x2, y2) = tgt.edge_midpoint(tgt_of[full[s]])
        rng = max(rng, math.hypot(x2 - x1, y2 - y1))

    out = replace_lattice(tgt, punctures=frozenset(vmap[p] for p in lat.punctures))
    out.version = max(lat.version, tgt.version) + 1
    record = MoveRecord(kind=PERMUTATION, sigma=dict(full), range=rng)
    return out, record


def sigma_from_vertex_map(
    lat: SurfaceLattice, target: SurfaceLattice, vmap: dict[int, int]
) -> dict[int, int]:
    """Qubit-slot bijection induced by a vertex bijection.

    Each qubit edge (u, v) of the source must map to a qubit edge
    (vmap[u], vmap[v]) of the target; parallel target edges are matched in
    sorted-id order, which is unambiguous for all shipped layouts.
    """
    tgt_pairs: dict[frozenset[int], list[int]] = {}
    for e, rec in sorted(target.edges.items()):
        if not rec.pinned:
            tgt_pairs.setdefault(rec.endpoints(), []).append(e)
    taken: set[int] = set()
    sigma: dict[int, int] = {}
    for e, rec in sorted(lat.edges.items()):
        if rec.pinned:
            continue
        want = frozenset((vmap[rec.v1], vmap[rec.v2]))
        hits = [x for x in tgt_pairs.get(want, []) if x not in taken]
        if not hits:
            raise MoveError(f"edge {e} has no qubit image under the vertex map")
        taken.add(hits[0])
        sigma[rec.qubit] = target.edges[hits[0]].qubit
    return sigma


def replay_move(lat: SurfaceLattice, record: MoveRecord, target: Optional[SurfaceLattice] = None):
    if record.kind == F_MOVE:
        return pachner_22(lat, record.edge)[0]
    if record.kind == PACHNER_13:
        return pachner_13(lat, record.triangles[0])[0]
    if record.kind == PACHNER_31:
        return pachner_31(lat, record.vertex)[0]
    if record.kind in (PERMUTATION, LOCAL_SWAP):
        return apply_cpi(lat, record.sigma or {}, target=target)[0]
    raise MoveError(f"unknown move kind {record.kind}")


# ---- isomorphism ---------------------------------------------------------------


def _structure_tables(lat: SurfaceLattice):
    ve = lat.vertex_edges()
    deg = {v: len(ve[v]) for v in lat.vertices}
    pin = {v: sum(1 for e in ve[v] if lat.edges[e].pinned) for v in lat.vertices}
    return ve, deg, pin


def _verify_iso(a: SurfaceLattice, b: SurfaceLattice, vmap: dict[int, int]):
    """Edge and triangle correspondence induced by a vertex bijection."""
    if set(vmap.keys()) != set(a.vertices) or set(vmap.values()) != set(b.vertices):
        return None
    b_pairs: dict[tuple[frozenset[int], bool], list[int]] = {}
    for e, rec in sorted(b.edges.items()):
        b_pairs.setdefault((rec.endpoints(), rec.pinned), []).append(e)
    emap: dict[int, int] = {}
    used: set[int] = set()
    for e, rec in sorted(a.edges.items()):
        key = (frozenset((vmap[rec.v1], vmap[rec.v2])), rec.pinned)
        hits = [x for x in b_pairs.get(key, []) if x not in used]
        if not hits:
            return None
        emap[e] = hits[0]
        used.add(hits[0])
    if len(used) != len(b.edges):
        return None
    b_tris = {}
    for t, es in b.triangles.items():
        b_tris.setdefault(tuple(sorted(es)), []).append(t)
    seen: set[int] = set()
    for t, es in a.triangles.items():
        key = tuple(sorted(emap[e] for e in es))
        hits = [x for x in b_tris.get(key, []) if x not in seen]
        if not hits:
            # parallel-edge ambiguity: retry with swapped parallel assignments is
            # out of scope; treat as failure
            return None
        seen.add(hits[0])
    if frozenset(vmap[p] for p in a.punctures) != b.punctures:
        return None
    return {"vertices": vmap, "edges": emap}


def isomorphism_check(a: SurfaceLattice, b: SurfaceLattice):
    """Structure-preserving isomorphism (vertices + edges), or None.

    Tries the layout-position seeding first; falls back to exhaustive
    backtracking for lattices of at most 200 edges.
    """
    if len(a.vertices) != len(b.vertices) or len(a.edges) != len(b.edges):
        return None
    if len(a.triangles) != len(b.triangles) or len(a.punctures) != len(b.punctures):
        return None

    def pos_key(lat):
        return {v: (round(x, 9), round(y, 9)) for v, (x, y) in lat.vertices.items()}

    pa, pb = pos_key(a), pos_key(b)
    if sorted(pa.values()) == sorted(pb.values()) and len(set(pb.values())) == len(pb):
        rev = {xy: v for v, xy in pb.items()}
        vmap = {v: rev[xy] for v, xy in pa.items()}
        got = _verify_iso(a, b, vmap)
        if got is not None:
            return got

    if len(a.edges) > 200:
        return None

    ve_a, deg_a, pin_a = _structure_tables(a)
    ve_b, deg_b, pin_b = _structure_tables(b)

    def sig(lat, ve, deg, pin, v):
        return (
            deg[v],
            pin[v],
            v in lat.punctures,
            tuple(sorted(deg[_other(lat, e, v)] for e in ve[v])),
        )

    def _other(lat, e, v):
        rec = lat.edges[e]
        return rec.v2 if rec.v1 == v else rec.v1

    sig_b: dict = {}
    for v in b.vertices:
        sig_b.setdefault(sig(b, ve_b, deg_b, pin_b, v), []).append(v)

    order = sorted(a.vertices, key=lambda v: (-deg_a[v], v))
    assign: dict[int, int] = {}
    used: set[int] = set()

    def ok(v, img):
        for e in ve_a[v]:
            w = _other(a, e, v)
            if w in assign:
                if b.edge_between(img, assign[w]) is None and not (w == v):
                    return False
        return True

    def dfs(i):
        if i == len(order):
            return _verify_iso(a, b, dict(assign))
        v = order[i]
        for img in sig_b.get(sig(a, ve_a, deg_a, pin_a, v), []):
            if img in used or not ok(v, img):
                continue
            assign[v] = img
            used.add(img)
            got = dfs(i + 1)
            if got is not None:
                return got
            del assign[v]
            used.discard(img)
        return None

    return dfs(0)


# ---- serialization ---------------------------------------------------------------


def lattice_to_json(lat: SurfaceLattice) -> str:
    doc = {
        "topology": lat.topology,
        "vertices": [
            {"id": v, "x": format(x, ".12g"), "y": format(y, ".12g")}
            for v, (x, y) in sorted(lat.vertices.items())
        ],
        "edges": [
            {"id": e, "v1": rec.v1, "v2": rec.v2, "qubit": rec.qubit}
            for e, rec in sorted(lat.edges.items())
        ],
        "triangles": [{"id": t, "edges": list(es)} for t, es in sorted(lat.triangles.items())],
        "punctures": sorted(lat.punctures),
        "version": lat.version,
    }
    return json.dumps(doc, sort_keys=True, indent=2)


def lattice_from_json(text: str) -> SurfaceLattice:
    doc = json.loads(text)
    lat = SurfaceLattice(
        topology=doc["topology"],
        vertices={int(v["id"]): (float(v["x"]), float(v["y"])) for v in doc["vertices"]},
        edges={
            int(e["id"]): Edge(int(e["v1"]), int(e["v2"]), None if e["qubit"] is None else int(e["qubit"]))
            for e in doc["edges"]
        },
        triangles={int(t["id"]): tuple(int(x) for x in t["edges"]) for t in doc["triangles"]},
        punctures=frozenset(int(p) for p in doc["punctures"]),
        version=int(doc["version"]),
    )
    lat.check()
    return lat
