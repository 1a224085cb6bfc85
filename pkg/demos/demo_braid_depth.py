"""Constant-depth braiding vs the sequential baseline.

Builds the two-puncture patch at increasing code distance, schedules a
full exchange both ways, and prints the depth accounting. The braid
needs the same number of layers at every size; the baseline grows
linearly with the transport path.
"""

from tvq import (
    baseline_schedule,
    braid_schedule,
    build_planar_patch,
    compile_schedule,
    fibonacci_data,
    polar_vertex_id,
)

data = fibonacci_data()

print(f"{'d':>3} {'braid moves':>12} {'braid depth':>12} {'gate depth':>11} "
      f"{'baseline steps':>15} {'baseline gdepth':>15}")
for d in (4, 6, 8):
    rows, cols = d // 2 + 4, 3 * d
    lat = build_planar_patch(rows, cols, punctures=[(0, 0), (2, 0)])
    anyon = polar_vertex_id(cols, 2, 0)

    sched = braid_schedule(lat, anyon, 0, steps=6, data=data)
    rep = sched.depth_report()
    circ = compile_schedule(lat, sched, data)

    path = [polar_vertex_id(cols, 2, -(i + 1) % cols) for i in range(cols)]
    base = baseline_schedule(lat, anyon, path, data=data)
    bcirc = compile_schedule(lat, base, data)

    print(f"{d:>3} {sched.move_count():>12} {rep.total_steps:>12} {circ.depth():>11} "
          f"{base.depth_report().total_steps:>15} {bcirc.depth():>15}")

print("\nthe braid's move count grows with area (more cells flip in parallel)")
print("but its depth columns are flat; the baseline doubles from d=4 to d=8.")
