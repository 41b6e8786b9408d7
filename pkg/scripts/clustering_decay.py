"""Clustering sequences around the zero control: exact L1 distance at every
level while the tested weak gap halves, the constructive side of the
weak-vs-strong dichotomy.

Usage: python3 scripts/clustering_decay.py [out.csv]
"""

import csv
import sys

from bangband import (Box, ControlField, Mesh1D, TestBank, clustering_sequence,
                      l1_distance, prolong_to, split_radius, weak_gap)


def main(out_path="clustering_decay.csv"):
    mesh = Mesh1D.uniform(0.0, 1.0, 64)
    box = Box(lo=[-1.0], hi=[1.0])
    u_star = ControlField.constant(mesh, [0.0])
    bank = TestBank.monomials(mesh, max_degree=8)
    delta0 = split_radius(u_star, box)
    print(f"delta0 = {delta0!r}")

    rows = []
    for delta in (0.05, 0.1, delta0):
        for level in range(1, 13):
            member = clustering_sequence(u_star, box, delta, level)
            dist = l1_distance(member.field, prolong_to(u_star, member.field.mesh))
            gap = weak_gap(member.field, u_star, bank)
            rows.append({"delta": delta, "level": level,
                         "distance": dist, "weak_gap": gap})
            print(f"delta={delta:>6.3f}  level={level:>2d}  "
                  f"distance={dist:.12f}  weak_gap={gap:.3e}")

    with open(out_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {out_path}")


if __name__ == "__main__":
    main(*sys.argv[1:])
