"""Exact retriangulation: flips and subdivisions preserve everything.

Walks a tetrahedron-boundary sphere through Pachner moves and checks,
on exact sparse states, that each move is reversible and that the
code-space dimension never budges.
"""

import numpy as np

from tvq import (
    MoveError,
    build_tetra_sphere,
    code_space_dim,
    fibonacci_data,
    apply_fmove,
    apply_pachner13,
    apply_pachner31,
    ground_project,
    inner,
    make_state,
    pachner_13,
    pachner_22,
    random_valid_state,
)

data = fibonacci_data()
lat = build_tetra_sphere()
rng = np.random.default_rng(1)

print(f"tetra sphere: {len(lat.edges)} edges, {len(lat.triangles)} triangles,")
print(f"code-space dimension {code_space_dim(lat, data)} (a sphere stores nothing)")

st = random_valid_state(lat, rng, data=data)
st = ground_project(st, lat, data)
st = make_state(lat, st.configs, st.amps / st.norm())

print("\nflip edge 0 twice (the F-move is self-inverse):")
mid, mid_lat = apply_fmove(st, lat, 0, data)
back, back_lat = apply_fmove(mid, mid_lat, 0, data)
back = make_state(lat, back.configs, back.amps)
print(f"  overlap with the original state: {abs(inner(st, back)):.15f}")

print("\nsubdivide triangle 0 (1-3 move), then merge it back (3-1):")
mid, mid_lat = apply_pachner13(st, lat, 0, data)
_, rec = pachner_13(lat, 0)
print(f"  subdivided lattice has {len(mid_lat.edges)} edges (+3 ancilla qubits)")
back, _ = apply_pachner31(mid, mid_lat, rec.vertex, data)
back = make_state(lat, back.configs, back.amps)
print(f"  overlap after the round trip: {abs(inner(st, back)):.15f}")

print("\ndimension along a random move walk:")
cur = lat
flips = 0
while flips < 4:
    edge = sorted(cur.edges)[int(rng.integers(len(cur.edges)))]
    try:
        cur, _ = pachner_22(cur, edge)
    except MoveError:
        continue  # some edges sit in degenerate quads; pick another
    flips += 1
    print(f"  after flip {flips}: dim = {code_space_dim(cur, data)}")
