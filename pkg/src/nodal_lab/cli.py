"""Command-line front end: ``nodal-lab <subcommand> [flags]``.

Exit status is 0 on success, 1 for invalid input and 2 for numerical
failures.  Every file written embeds a hash of the command's settings;
``nodal-lab --verify FILE`` re-runs the recorded command and compares bytes.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import re
import sys
import tempfile

import numpy as np

from . import __version__
from .coupling import (coupled_marginals, coupling_tail_experiment, couple, experiment_angles,
                       kernel_gap_check, persistence_transfer_experiment, write_pair_grid_csv)
from .errors import NumericalError, SampleError, ValidationError
from .gaussian_fields import (PlanarField, cilleruelo_type_field, convention_from_name, grid_axes,
                              write_grid_csv)
from .kac_rice import (AsymptoticInputs, KacRiceContext, degenerate_asymptotic,
                       expected_zero_count, leading_coefficient, second_factorial_moment_numeric)
from .lattice_spectral import (axis_deviation, enumerate_lattice_points, fourier_coefficient,
                               integer_moment_identities, lattice_nu4, resolve_measure)
from .monte_carlo import (ExperimentConfig, compare_histogram, default_convention, estimate,
                          exact_distribution_for, persistence_sweep, sample_field, sample_rng)

# settings that never change results
_NEUTRAL = {"out", "workers", "verify", "command", "func"}
_HEADER = re.compile(r"^# nodal-lab (\{.*\})\s*$")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from exc


class _Flatten(argparse.Action):
    """Accept ``--L 5 10``, ``--L 5,10`` or ``--L "5 10"`` alike."""

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, [v for chunk in values for v in chunk])


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _default_workers() -> int:
    env = os.environ.get("NODAL_LAB_WORKERS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nodal-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--verify", metavar="FILE", help="re-run the command recorded in FILE and compare")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, samples=True):
        sp.add_argument("--out", help="output directory (created if missing)")
        sp.add_argument("--seed", type=int, default=0, help="64-bit seed (default 0)")
        if samples:
            sp.add_argument("--samples", type=_positive_int, default=10_000,
                            help="number of Monte Carlo samples (default 10000)")
            sp.add_argument("--workers", type=_positive_int, default=None,
                            help="worker processes (default $NODAL_LAB_WORKERS or 1); "
                                 "never changes results")

    def field_flags(sp):
        sp.add_argument("--measure", default="cilleruelo",
                        help="cilleruelo, tilted, uniform:<n>, sigma:<theta>:<n>, lattice:<m> "
                             "or a JSON file (default cilleruelo)")
        sp.add_argument("--convention", choices=["TwoPi", "Angular"], default=None,
                        help="frequency convention (default TwoPi for lattice:<m>, else Angular)")

    sp = sub.add_parser("lattice", help="lattice points and moment identities for one m")
    sp.add_argument("--m", type=_positive_int, required=True)
    common(sp, samples=False)

    sp = sub.add_parser("sample", help="sample one field and write a value grid")
    field_flags(sp)
    sp.add_argument("--coefficients", help="replay a coefficient JSON instead of sampling")
    sp.add_argument("--index", type=int, default=0, help="sample index within the seed's streams")
    sp.add_argument("--window", type=_float_list, nargs="+", action=_Flatten,
                    default=[0.0, 4 * math.pi, 0.0, 4 * math.pi],
                    help="x0 x1 y0 y1 (default 0 4pi 0 4pi)")
    sp.add_argument("--resolution", type=int, default=256, help="points per axis, at least 32")
    common(sp, samples=False)

    sp = sub.add_parser("moments", help="Monte Carlo moments of the zero count")
    field_flags(sp)
    sp.add_argument("--u", type=float, required=True, help="direction in radians")
    sp.add_argument("--L", type=float, required=True, help="segment length")
    sp.add_argument("--grid-step", type=float, default=None)
    common(sp)

    sp = sub.add_parser("persistence", help="probability of no zero on [0, L]")
    field_flags(sp)
    sp.add_argument("--u", type=_float_list, nargs="+", action=_Flatten, required=True,
                    help="direction(s) in radians")
    sp.add_argument("--L", type=_float_list, nargs="+", action=_Flatten, required=True,
                    help="segment length(s)")
    sp.add_argument("--grid-step", type=float, default=None)
    common(sp)

    sp = sub.add_parser("kacrice", help="Kac-Rice second factorial moment vs small-L asymptotics")
    sp.add_argument("--measure", default="lattice:1")
    sp.add_argument("--convention", choices=["TwoPi", "Angular"], default="TwoPi")
    sp.add_argument("--u", type=float, required=True)
    sp.add_argument("--L", type=_float_list, nargs="+", action=_Flatten, required=True)
    common(sp, samples=False)

    sp = sub.add_parser("coupling", help="coupled Cilleruelo-type / Cilleruelo experiments")
    sp.add_argument("--eps", type=float, required=True, help="angular band of the atoms")
    sp.add_argument("--M", type=_positive_int, default=2, help="number of atom angles (default 2)")
    sp.add_argument("--R", type=_float_list, nargs="+", action=_Flatten,
                    default=[5.0, 10.0, 20.0], help="disk radii")
    sp.add_argument("--u", type=float, default=None, help="direction for the persistence transfer")
    sp.add_argument("--L", type=float, default=None, help="length for the persistence transfer")
    sp.add_argument("--grid-resolution", type=int, default=0,
                    help="also write the paired value grid of sample 0 on [0, 4pi]^2")
    common(sp)
    return p


# ---------------------------------------------------------------------------
# output helpers

def _settings(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NEUTRAL}


def _meta(args) -> dict:
    settings = _settings(args)
    raw = json.dumps({"command": args.command, "settings": settings, "version": __version__},
                     sort_keys=True, separators=(",", ":"))
    return {"command": args.command, "settings": settings, "version": __version__,
            "config_hash": hashlib.sha256(raw.encode()).hexdigest()[:16]}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


class _Writer:
    def __init__(self, args):
        self.dir = args.out
        self.meta = _meta(args)
        self.written = []
        if self.dir:
            try:
                os.makedirs(self.dir, exist_ok=True)
            except OSError as exc:
                raise ValidationError(f"cannot create output directory {self.dir}: {exc}") from exc

    @property
    def header(self) -> str:
        return "nodal-lab " + json.dumps(self.meta, sort_keys=True, separators=(",", ":"))

    def path(self, name):
        return os.path.join(self.dir, name) if self.dir else None

    def json(self, name, payload):
        if not self.dir:
            return
        doc = {"meta": self.meta, "result": _clean(payload)}
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
            fh.write("\n")
        self.written.append(name)

    def csv(self, name, header, rows):
        if not self.dir:
            return
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {self.header}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        self.written.append(name)


def _workers(args) -> int:
    return args.workers or _default_workers()


def _convention(args) -> str:
    return args.convention or default_convention(args.measure)


# ---------------------------------------------------------------------------
# subcommands

def cmd_lattice(args, out: _Writer) -> str:
    circle = enumerate_lattice_points(args.m)
    rep = integer_moment_identities(circle)
    nu4 = lattice_nu4(circle)
    dev = float(axis_deviation([math.atan2(b, a) for a, b in circle.points]).max())
    out.json("lattice.json", {
        "m": args.m, "r2": circle.r2, "nu4": nu4, "max_axis_deviation": dev,
        "identities_ok": rep.ok, "points": [[a, b] for a, b in circle.points]})
    return f"m={args.m} r2={circle.r2} nu4={nu4:.12g} identities={'ok' if rep.ok else 'FAILED'}"


def cmd_sample(args, out: _Writer) -> str:
    if args.resolution < 32:
        raise ValidationError("--resolution must be at least 32")
    if len(args.window) != 4:
        raise ValidationError("--window needs four numbers: x0 x1 y0 y1")
    if args.coefficients:
        try:
            with open(args.coefficients, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ValidationError(f"--coefficients: cannot read {args.coefficients}: {exc}") from exc
        try:
            # accept our own output envelope as well as a bare field document
            field = PlanarField.from_dict(doc.get("result", doc) if isinstance(doc, dict) else doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"--coefficients: malformed field in {args.coefficients}: {exc}"
                                  ) from exc
    else:
        field = sample_field(resolve_measure(args.measure), _convention(args), args.seed, args.index)
    x0, x1, y0, y1 = args.window
    xs, ys = grid_axes(((x0, x1), (y0, y1)), args.resolution)
    values = field.grid(xs, ys)
    if out.dir:
        write_grid_csv(out.path("grid.csv"), xs, ys, values, out.header)
        out.written.append("grid.csv")
    out.json("coefficients.json", field.to_dict())
    out.json("metadata.json", {"measure": args.measure, "seed": args.seed, "index": args.index,
                               "convention": field.convention.tag, "window": args.window,
                               "resolution": args.resolution, "terms": len(field.coefficients)})
    return f"sampled {field!r}; grid {args.resolution}x{args.resolution}, max |value| {np.abs(values).max():.4g}"


def cmd_moments(args, out: _Writer) -> str:
    cfg = ExperimentConfig(args.measure, args.u, args.L, args.samples, args.seed,
                           _convention(args), args.grid_step)
    est = estimate(cfg, _workers(args))
    payload = {"config": cfg.to_dict(), "estimates": est.to_dict()}
    try:
        exact = exact_distribution_for(args.u, args.L) if args.measure == "cilleruelo" \
            and cfg.convention == "Angular" else None
    except ValidationError:
        exact = None
    if exact is not None:
        payload["exact_comparison"] = compare_histogram(est.histogram, exact).to_dict()
    out.json("moments.json", payload)
    out.csv("histogram.csv", ["count", "samples", "frequency"],
            [(k, v, v / est.n_samples) for k, v in sorted(est.histogram.items())])
    return (f"mean={est.mean:.6g}+-{est.mean_se:.2g} E[Z(Z-1)]={est.second_factorial:.6g}"
            f"+-{est.second_factorial_se:.2g} var={est.variance:.6g} P(Z=0)={est.persistence_report}")


def cmd_persistence(args, out: _Writer) -> str:
    cfg = ExperimentConfig(args.measure, tuple(args.u), tuple(args.L), args.samples, args.seed,
                           _convention(args), args.grid_step)
    rows = persistence_sweep(cfg, _workers(args))
    out.csv("persistence.csv", ["u", "L", "persistence", "se", "upper_bound", "zero", "n"],
            [(r.u, r.L, r.persistence, r.se, r.upper_bound, int(r.is_zero), r.n) for r in rows])
    out.json("persistence.json", {"config": cfg.to_dict(),
                                  "rows": [dict(vars(r), upper_bound=r.upper_bound) for r in rows]})
    return "; ".join(f"u={r.u:g} L={r.L:g} P={r.persistence:.6g}" for r in rows)


def cmd_kacrice(args, out: _Writer) -> str:
    mu = resolve_measure(args.measure)
    ctx = KacRiceContext.from_measure(mu, args.u, args.convention)
    conv = convention_from_name(args.convention)
    inputs = AsymptoticInputs(fourier_coefficient(mu, 4), args.u) if conv.tag == "TwoPi" else None
    rows = []
    for L in args.L:
        num = second_factorial_moment_numeric(ctx, L)
        lead = leading_coefficient(inputs) * L ** 3 if inputs else float("nan")
        degen = degenerate_asymptotic(L) if inputs and inputs.is_degenerate else float("nan")
        ref = degen if inputs and inputs.is_degenerate else lead
        rows.append((L, expected_zero_count(ctx, L), num, lead, degen,
                     num / ref if ref and math.isfinite(ref) else float("nan")))
    out.csv("kacrice.csv", ["L", "expected_zeros", "second_factorial_numeric",
                            "asymptotic_leading", "asymptotic_degenerate", "ratio"], rows)
    return "; ".join(f"L={r[0]:g} numeric={r[2]:.6g} asymptotic={r[3] if not inputs or not inputs.is_degenerate else r[4]:.6g}"
                     for r in rows)


def cmd_coupling(args, out: _Writer) -> str:
    phis = experiment_angles(args.eps, args.M, args.seed)
    tail = coupling_tail_experiment(args.eps, args.M, args.R, args.samples, args.seed, phis=phis)
    marg = coupled_marginals(args.eps, args.M, args.samples, args.seed, phis=phis)
    pair = couple(cilleruelo_type_field(phis, sample_rng(args.seed, 0), eps=args.eps), args.eps)
    gap = kernel_gap_check(pair, max(args.R), seed=args.seed)
    payload = {"tail": tail.to_dict(), "marginals": vars(marg), "kernel_gap": vars(gap)}
    msg = (f"eps={args.eps} M={args.M}: Lipschitz failures "
           f"{sum(r.lipschitz_failures for r in tail.rows)}, kernel-gap failures {gap.failures}")
    if args.u is not None or args.L is not None:
        if args.u is None or args.L is None:
            raise ValidationError("--u and --L must be given together")
        tr = persistence_transfer_experiment(args.eps, args.u, args.L, args.samples, args.seed,
                                             M=args.M, phis=phis)
        payload["transfer"] = tr.to_dict()
        msg += f"; P(Z_G=0)={tr.persistence_g['freq']:.6g} inequality {'holds' if tr.inequality_holds else 'FAILS'}"
    out.json("coupling.json", payload)
    if args.grid_resolution and out.dir:
        if args.grid_resolution < 32:
            raise ValidationError("--grid-resolution must be at least 32")
        xs, ys = grid_axes(((0.0, 4 * math.pi), (0.0, 4 * math.pi)), args.grid_resolution)
        write_pair_grid_csv(out.path("pair_grid.csv"), pair, xs, ys, out.header)
        out.written.append("pair_grid.csv")
    return msg


COMMANDS = {"lattice": cmd_lattice, "sample": cmd_sample, "moments": cmd_moments,
            "persistence": cmd_persistence, "kacrice": cmd_kacrice, "coupling": cmd_coupling}


# ---------------------------------------------------------------------------
# verification

def read_meta(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
            if first.startswith("#"):
                m = _HEADER.match(first)
                if not m:
                    raise ValidationError(f"--verify: {path} has no nodal-lab header")
                return json.loads(m.group(1))
            fh.seek(0)
            return json.load(fh)["meta"]
    except OSError as exc:
        raise ValidationError(f"--verify: cannot read {path}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise ValidationError(f"--verify: {path} carries no run metadata") from exc


def verify(path: str) -> int:
    meta = read_meta(path)
    args = argparse.Namespace(command=meta["command"], **meta["settings"])
    if meta.get("version") != __version__:
        print(f"note: file written by version {meta.get('version')}, running {__version__}")
    if _meta(args)["config_hash"] != meta.get("config_hash"):
        print(f"config hash mismatch for {path}")
        return 1
    with tempfile.TemporaryDirectory() as tmp:
        args.out, args.workers = tmp, None
        out = _Writer(args)
        COMMANDS[args.command](args, out)
        name = os.path.basename(path)
        fresh = os.path.join(tmp, name)
        if not os.path.exists(fresh):
            print(f"re-run did not produce {name}")
            return 1
        with open(fresh, "rb") as a, open(path, "rb") as b:
            same = a.read() == b.read()
    print(f"{path}: config_hash={meta['config_hash']} {'identical' if same else 'DIFFERS'}")
    return 0 if same else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verify:
            return verify(args.verify)
        if not args.command:
            parser.error("a subcommand is required")
        out = _Writer(args)
        summary = COMMANDS[args.command](args, out)
        print(summary)
        if out.written:
            print(f"config_hash={out.meta['config_hash']} wrote {', '.join(out.written)} to {out.dir}")
        return 0
    except SampleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if isinstance(exc.cause, ValidationError) else 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
