"""Error strings through a braid: bounded stretch, fixed light cone.

Seeds short error strings near the transport corridor, carries them
through every relabeling of the braid, and reports how far their
endpoints spread. The relabelings are permutations, so the number of
edges in a string never changes; only its shape does, and the maximum
endpoint-span stretch is the same at both code sizes.
"""

from tvq import report_to_csv, stretch_report

rep = stretch_report([4, 8], trials=100, seed=17)

for s in rep["summary"]:
    print(f"d={s['d']}: max stretch {s['max_ratio']:.2f}, "
          f"mean {s['mean_ratio']:.2f}, "
          f"light-cone radius bound {s['lightcone_radius']}")

print("\nfirst few trials (full table via the errors CLI subcommand):")
for line in report_to_csv(rep).splitlines()[:8]:
    print(" ", line)
