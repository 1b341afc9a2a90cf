#!/usr/bin/env python3
"""Fit the frequency trends of the phase-space defects at secular roots.

For a genuinely complex Hermitian coupling on the square torus, follows one
new eigenvalue near each requested frequency, builds the Green combination
there, and reports how the shell-concentration defect and the invariance
defect move with the frequency.  The expected signs: support defect shrinks
(negative log-log slope vs 1/h), invariance defect shrinks with 1/h, i.e.
grows with h (positive log-log slope vs h).

A scalar or otherwise real-equivalent coupling would be useless here: its
null coefficients are real, the combination is time-reversal symmetric, and
every bracket pairing vanishes identically instead of decaying.
"""

import argparse
import sys
import time

import numpy as np

from pointscatter.backends import make_backend
from pointscatter.extension import find_new_eigenvalues
from pointscatter.frames import frame_from_hermitian
from pointscatter.green import combination_at_root
from pointscatter.measures import default_symbol_family, wigner_report

COUPLING = np.array([[0.4, 0.3 + 0.5j], [0.3 - 0.5j, -0.2]])
POINTS = [[0.31, 0.77], [2.1, 1.3]]


def nearest_root(backend, frame, Q, target_eta, half_width=6.0):
    roots = find_new_eigenvalues(frame, backend, Q,
                                 (target_eta - half_width, target_eta + half_width))
    if not roots:
        return None
    return min(roots, key=lambda r: abs(r.eta - target_eta))


def loglog_slope(x, y):
    x, y = np.asarray(x), np.asarray(y)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--targets", default="40,55,76,105,146,202,280,320",
                        help="comma-separated inverse frequencies to follow")
    parser.add_argument("--delta", default=0.1, type=float,
                        help="shell half-width for the support defect")
    args = parser.parse_args()
    targets = [float(t) for t in args.targets.split(",")]

    backend = make_backend("torus2")
    frame = frame_from_hermitian(COUPLING)
    family = default_symbol_family(2)

    rows = []
    t0 = time.time()
    for t in targets:
        root = nearest_root(backend, frame, POINTS, t * t)
        if root is None:
            print(f"  1/h = {t:7.1f}: no root found, skipped", file=sys.stderr)
            continue
        g, _ = combination_at_root(frame, backend, POINTS, root)
        report = wigner_report(g.h, g, family, delta_grid=(args.delta,),
                               eta_star=root.eta)
        support = 1.0 - report.shell_concentration[args.delta]
        rows.append((1.0 / g.h, support, report.invariance_defect))
        print(f"  1/h = {1.0 / g.h:9.3f}  support defect = {support:.3e}"
              f"  invariance defect = {report.invariance_defect:.3e}")

    if len(rows) >= 2:
        inv_h, support, invariance = map(np.array, zip(*rows))
        print(f"\nsupport-defect slope vs 1/h:   {loglog_slope(inv_h, support):+.3f}"
              "  (want < 0)")
        print(f"invariance-defect slope vs h:  {loglog_slope(1.0 / inv_h, invariance):+.3f}"
              "  (want > 0)")
    print(f"elapsed: {time.time() - t0:.1f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
