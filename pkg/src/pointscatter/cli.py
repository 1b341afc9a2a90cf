"""Command line driver: one config file in, deterministic tables out.

Subcommands cover the whole laboratory: `shells` (spectrum enumeration),
`weyl` (counting remainders), `secular` (new eigenvalues), `green` and
`quasimode` (window-mass and residual curves), `measure` (phase-space
reports), `all` (everything applicable, one manifest).

Determinism contract: identical config bytes and seed give byte-identical
artifacts.  Floats are printed with 17 significant digits, rows are emitted
in a fixed order, and the manifest records a hash of every output so reruns
can be compared file by file.  Numeric failures never abort a whole run:
they become rows in the sibling *_errors.csv and turn the exit status into
1 (some items survived) or 3 (nothing did).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import load_config
from .errors import ConfigError, PointScatterError, UnsupportedBackendError
from .extension import find_new_eigenvalues
from .frames import FrameValidationError
from .green import (
    SpectralWindow,
    combination_at_root,
    default_combination_cutoff,
    l2_norm_sq,
    make_green_combination,
    quasimode_residual,
    window_mass,
)
from .measures import measure_scan
from .weyl import off_diagonal_window, window_diagonal

SUBCOMMANDS = ("shells", "weyl", "secular", "green", "quasimode", "measure", "all")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3


def _fmt(v):
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


class _Emitter:
    """Collects output files so the manifest can hash them at the end."""

    def __init__(self, out_dir, verbose=False):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written = []
        self.verbose = verbose

    def log(self, msg):
        if self.verbose:
            print(msg, file=sys.stderr)

    def csv(self, name, header, rows):
        path = self.out_dir / name
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        self.written.append(name)
        self.log(f"wrote {name} ({len(rows)} rows)")

    def json(self, name, payload):
        path = self.out_dir / name
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.written.append(name)
        self.log(f"wrote {name}")

    def manifest(self, subcommand, cfg, seed):
        hashes = {}
        for name in sorted(self.written):
            digest = hashlib.sha256((self.out_dir / name).read_bytes()).hexdigest()
            hashes[name] = digest
        self.json("manifest.json", {
            "subcommand": subcommand,
            "config_sha256": cfg.sha256,
            "seed": int(seed),
            "versions": {
                "pointscatter": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": ".".join(str(c) for c in sys.version_info[:3]),
            },
            "outputs": hashes,
        })


def _scan_roots(cfg, backend, frame, Q, threads):
    return find_new_eigenvalues(
        frame, backend, Q, cfg.ranges.lambda_sq,
        grid=cfg.tolerances.secular_grid,
        refine_rel=cfg.tolerances.refine_rel,
        threads=threads,
    )


# -- subcommand bodies; each returns (n_ok, n_failed) -------------------------

def _run_shells(cfg, backend, frame, Q, em, threads, seed):
    table = backend.shell_table(cfg.ranges.shell_x)
    rows = [(float(table.lam[i]), int(table.lam_sq[i]), int(table.mult[i]))
            for i in range(len(table))]
    em.csv("shells.csv", ["lambda", "lambda_sq_integer", "multiplicity"], rows)
    return len(rows), 0


def _run_secular(cfg, backend, frame, Q, em, threads, seed):
    roots = _scan_roots(cfg, backend, frame, Q, threads)
    rows = []
    for r in roots:
        sqrt_eta = math.sqrt(r.eta) if r.eta > 0 else float("nan")
        rows.append((r.eta, sqrt_eta, r.gap[0], r.gap[1], r.residual))
    em.csv("secular.csv",
           ["eta_star", "sqrt_eta_star", "gap_left", "gap_right", "residual"],
           rows)
    return len(rows), 0


def _green_rows(cfg, backend, g, tail, h):
    rows = []
    for gamma in cfg.ranges.gamma_values:
        for ups in cfg.ranges.upsilon_values:
            r = gamma * ups
            win = SpectralWindow(1.0 / h, r)
            rows.append((h, r, window_mass(backend, g, win),
                         quasimode_residual(backend, g, win), tail))
    return rows


def _run_green(cfg, backend, frame, Q, em, threads, seed):
    rng = np.random.default_rng(seed)
    beta = rng.standard_normal(len(Q)) + 1j * rng.standard_normal(len(Q))
    beta /= np.linalg.norm(beta)
    r_max = max(cfg.ranges.gamma_values) * max(cfg.ranges.upsilon_values)
    rows, errors = [], []
    for h_inv in cfg.ranges.h_inverse_values:
        h = 1.0 / h_inv
        cutoff = cfg.tolerances.combination_cutoff
        if cutoff is None:
            cutoff = max(default_combination_cutoff(h), 1.3 * (h_inv + r_max))
        try:
            g = make_green_combination(backend, Q, beta, h, cutoff=cutoff)
            tail = l2_norm_sq(backend, g)["tail_bound"]
            rows.extend(_green_rows(cfg, backend, g, tail, h))
        except PointScatterError as exc:
            errors.append((f"h_inverse={_fmt(h_inv)}", f"{type(exc).__name__}: {exc}"))
    em.csv("green.csv", ["h", "r_or_gamma", "mass", "residual", "tail_bound"], rows)
    em.csv("green_errors.csv", ["item", "error"], errors)
    return len(cfg.ranges.h_inverse_values) - len(errors), len(errors)


def _run_quasimode(cfg, backend, frame, Q, em, threads, seed):
    rows, errors = [], []
    ok = 0
    for root in _scan_roots(cfg, backend, frame, Q, threads):
        try:
            if root.eta <= 0:
                raise PointScatterError("nonpositive spectral parameter has no frequency scale")
            g, gmat = combination_at_root(frame, backend, Q, root,
                                          cutoff=cfg.tolerances.combination_cutoff,
                                          tol=cfg.tolerances.green_tail)
            for gamma in cfg.ranges.gamma_values:
                win = SpectralWindow(1.0 / g.h, gamma)
                rows.append((g.h, gamma, window_mass(backend, g, win),
                             quasimode_residual(backend, g, win), gmat.tail_bound))
            ok += 1
        except PointScatterError as exc:
            errors.append((f"eta_star={_fmt(root.eta)}", f"{type(exc).__name__}: {exc}"))
    em.csv("quasimode.csv", ["h", "r_or_gamma", "mass", "residual", "tail_bound"], rows)
    em.csv("quasimode_errors.csv", ["item", "error"], errors)
    return ok, len(errors)


def _run_weyl(cfg, backend, frame, Q, em, threads, seed):
    d = backend.dimension
    kind = backend.spec.kind
    cells = []
    for X in cfg.ranges.x_values:
        for gamma in cfg.ranges.gamma_values:
            for i in range(len(Q)):
                cells.append((X, gamma, i, i))
            for i in range(len(Q)):
                for j in range(i + 1, len(Q)):
                    cells.append((X, gamma, i, j))

    def one(cell):
        X, gamma, i, j = cell
        try:
            if i == j:
                defect = window_diagonal(backend, Q[i], X, gamma)
            else:
                defect = off_diagonal_window(backend, Q[i], Q[j], X, gamma)
            normalized = abs(defect) / (gamma * X ** (d - 1))
            return ("ok", (X, gamma, defect, normalized, kind, i, j))
        except PointScatterError as exc:
            return ("err", (f"X={_fmt(X)} gamma={_fmt(gamma)} q={i} p={j}",
                            f"{type(exc).__name__}: {exc}"))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, cells))
    else:
        results = [one(c) for c in cells]
    rows = [payload for status, payload in results if status == "ok"]
    errors = [payload for status, payload in results if status == "err"]
    em.csv("weyl.csv",
           ["X", "gamma", "defect", "normalized_defect", "backend", "q_index", "p_index"],
           rows)
    em.csv("weyl_errors.csv", ["item", "error"], errors)
    return len(rows), len(errors)


def _slope(xs, ys):
    """log-log least-squares slope, or None when under two usable points."""
    pts = [(x, y) for x, y in zip(xs, ys)
           if x > 0 and y > 0 and math.isfinite(x) and math.isfinite(y)]
    if len(pts) < 2:
        return None
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    return float(np.polyfit(lx, ly, 1)[0])


def _run_measure(cfg, backend, frame, Q, em, threads, seed):
    family = cfg.symbol_family(backend.dimension)
    reports = measure_scan(
        backend, frame, Q, cfg.ranges.lambda_sq,
        family=family, delta_grid=cfg.ranges.delta_grid,
        grid=cfg.tolerances.secular_grid,
        refine_rel=cfg.tolerances.refine_rel,
        threads=threads,
    )
    rows, errors = [], []
    good = [r for r in reports if r.error is None]
    for r in reports:
        if r.error is not None:
            errors.append((f"eta_star={_fmt(r.eta_star)}", r.error))
            continue
        for delta in cfg.ranges.delta_grid:
            rows.append((r.eta_star, r.h, delta,
                         1.0 - r.shell_concentration[delta],
                         r.invariance_defect, r.invariance_symbol or ""))
    em.csv("measure.csv",
           ["eta_star", "h", "delta", "support_defect", "invariance_defect", "symbol_id"],
           rows)
    em.csv("measure_errors.csv", ["item", "error"], errors)

    support_slopes = {}
    for delta in cfg.ranges.delta_grid:
        support_slopes[_fmt(delta)] = _slope(
            [1.0 / r.h for r in good],
            [1.0 - r.shell_concentration[delta] for r in good])
    em.json("measure_summary.json", {
        "roots_ok": len(good),
        "roots_failed": len(errors),
        "support_defect_slope_vs_h_inverse": support_slopes,
        "invariance_defect_slope_vs_h": _slope(
            [r.h for r in good], [r.invariance_defect for r in good]),
    })
    return len(good), len(errors)


_BODIES = {
    "shells": _run_shells,
    "weyl": _run_weyl,
    "secular": _run_secular,
    "green": _run_green,
    "quasimode": _run_quasimode,
    "measure": _run_measure,
}


def run(subcommand, config_path, out_dir, threads=1, seed=0, verbose=False):
    """Execute one subcommand; returns the process exit status."""
    if subcommand not in SUBCOMMANDS:
        print(f"unknown subcommand {subcommand!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(config_path)
        backend = cfg.backend()
        Q = cfg.points(backend)
        frame = cfg.frame()
    except (ConfigError, FrameValidationError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    em = _Emitter(out_dir, verbose=verbose)

    if subcommand == "all":
        names = [n for n in ("shells", "weyl", "secular", "green", "quasimode", "measure")
                 if not (n == "measure" and backend.spec.kind == "sphere2")]
    else:
        names = [subcommand]

    ok = failed = 0
    try:
        for name in names:
            em.log(f"running {name}")
            n_ok, n_failed = _BODIES[name](cfg, backend, frame, Q, em, threads, seed)
            ok += n_ok
            failed += n_failed
    except UnsupportedBackendError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PointScatterError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RESOURCE

    em.manifest(subcommand, cfg, seed)
    if failed == 0:
        return EXIT_OK
    return EXIT_PARTIAL if ok > 0 else EXIT_RESOURCE


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="pointscatter",
        description="Point-perturbation laboratory: explicit spectra, secular "
                    "roots, Green combinations, Weyl and phase-space diagnostics.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for independent experiment cells")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for the random coefficient draws only")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    return run(args.subcommand, args.config, args.out,
               threads=args.threads, seed=args.seed, verbose=args.verbose)


if __name__ == "__main__":
    sys.exit(main())
