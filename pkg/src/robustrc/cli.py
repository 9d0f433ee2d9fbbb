"""Command-line front end: ``robustrc run | compare | validate``."""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import __version__, _kernels, tasks
from .config import ConfigError, load_experiment, resolved
from .errors import ContractViolation, TrialFailure, UndefinedRatio
from .harness import run_sweep, sensitivity_sweep, write_records

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRIAL = 3
EXIT_IO = 4

log = logging.getLogger("robustrc")


def fmt(x):
    """Shortest round-trip decimal for a float, independent of locale."""
    return repr(float(x))


def grid_csv(row_label, col_label, rows, cols, values):
    buf = io.StringIO()
    buf.write(",".join([f"{row_label}\\{col_label}"] + [fmt(c) for c in cols]) + "\n")
    for r, line in zip(rows, values):
        buf.write(",".join([fmt(r)] + [fmt(x) for x in line]) + "\n")
    return buf.getvalue()


def surface_csv(surface, which="mean"):
    return grid_csv("v", surface.p_name, surface.v_values, surface.p_values, getattr(surface, which))


def read_grid_csv(path):
    """Parse a grid CSV back into (row_label, col_label, rows, cols, values)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\r\n") for ln in fh if ln.strip()]
    if len(lines) < 2:
        raise ValueError(f"{path}: need a header and at least one data row")
    header = lines[0].split(",")
    if "\\" not in header[0]:
        raise ValueError(f"{path}: header must start with '<row>\\<col>'")
    row_label, col_label = header[0].split("\\", 1)
    cols = [float(x) for x in header[1:]]
    rows, values = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise ValueError(f"{path}: ragged row {ln!r}")
        rows.append(float(parts[0]))
        values.append([float(x) for x in parts[1:]])
    return row_label, col_label, rows, cols, np.array(values)


def summary_text(pairs):
    return "".join(f"{k}={v}\n" for k, v in pairs)


def write_atomic(files):
    """Write every ``{path: text}`` to a temp name first, then rename them all."""
    staged = []
    try:
        for path, text in files.items():
            directory = os.path.dirname(os.path.abspath(path))
            os.makedirs(directory, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _meta(exp_resolved, extra):
    return json.dumps(
        {"tool": "robustrc", "version": __version__, "backend": _kernels.backend(),
         "experiment": exp_resolved, **extra},
        indent=2, sort_keys=True,
    ) + "\n"


def _sweep_files(name, cfg, result, out_dir, exp_resolved):
    kind = cfg.kind.lower()
    files = {}
    for cond in ("clean", "noisy", "gamma"):
        files[os.path.join(out_dir, f"{name}_{cond}.csv")] = surface_csv(getattr(result, cond))
    for cond in ("clean", "noisy"):
        files[os.path.join(out_dir, f"{name}_{cond}_std.csv")] = surface_csv(getattr(result, cond), "std")
    pairs = [
        (f"aggregate_{kind}_clean", fmt(tasks.aggregate_nmse(result.clean.mean))),
        (f"aggregate_{kind}_noisy", fmt(tasks.aggregate_nmse(result.noisy.mean))),
    ]
    if np.all(result.gamma.mean > 0):
        pairs.append(("aggregate_log_gamma", fmt(tasks.aggregate_log_gamma(result.gamma.mean))))
    best = result.clean.argmax() if cfg.kind == "MC" else result.clean.argmin()
    pairs += [
        ("best_clean_v", fmt(best[0])), (f"best_clean_{cfg.p_name}", fmt(best[1])),
        ("best_clean_value", fmt(best[2])),
        ("regenerations", str(int(result.clean.regenerations.sum() + result.noisy.regenerations.sum()))),
    ]
    files[os.path.join(out_dir, f"{name}_summary.txt")] = summary_text(pairs)
    buf = io.StringIO()
    write_records(result.records, buf)
    files[os.path.join(out_dir, f"{name}_trials.jsonl")] = buf.getvalue()
    files[os.path.join(out_dir, f"{name}.meta.json")] = _meta(exp_resolved, {"output": name})
    return files


def _sensitivity_files(sens, result, out_dir, exp_resolved):
    label = "l" if sens.vary == "l" else "N"
    files = {
        os.path.join(out_dir, f"{sens.name}.csv"):
            grid_csv(label, "sigma", result.values, result.sigmas, result.mean),
        os.path.join(out_dir, f"{sens.name}_std.csv"):
            grid_csv(label, "sigma", result.values, result.sigmas, result.std),
        os.path.join(out_dir, f"{sens.name}.meta.json"): _meta(exp_resolved, {"output": sens.name}),
    }
    return files


def cmd_run(args):
    overrides = {"runs": args.runs, "seed": args.seed, "sigma": args.sigma, "k": args.k,
                 "workers": args.workers, "output_dir": args.output_dir}
    try:
        exp = load_experiment(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    info = resolved(exp)
    files = {}
    try:
        for name, cfg in exp.sweeps:
            log.info("sweep %s: %d cells x %d runs", name, len(cfg.v_grid) * len(cfg.p_grid), cfg.runs)
            result = run_sweep(cfg, workers=exp.workers)
            files.update(_sweep_files(name, cfg, result, exp.output_dir, info))
        for sens in exp.sensitivities:
            log.info("sensitivity %s: vary %s over %s", sens.name, sens.vary, list(sens.values))
            result = sensitivity_sweep(sens.base, sens.sigmas, sens.vary, sens.values, workers=exp.workers)
            files.update(_sensitivity_files(sens, result, exp.output_dir, info))
    except (TrialFailure, UndefinedRatio) as exc:
        print(f"trial failure: {exc}", file=sys.stderr)
        return EXIT_TRIAL
    try:
        write_atomic(files)
    except OSError as exc:
        print(f"cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in sorted(files):
        print(path)
    return EXIT_OK


def cmd_compare(args):
    try:
        clean = read_grid_csv(args.clean_csv)
        noisy = read_grid_csv(args.noisy_csv)
    except OSError as exc:
        print(f"cannot read surface: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"malformed surface: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if clean[:4] != noisy[:4] or clean[4].shape != noisy[4].shape:
        print("surfaces do not share the same axes", file=sys.stderr)
        return EXIT_CONFIG
    row_label, col_label, rows, cols, c_vals = clean
    n_vals = noisy[4]
    kind = args.kind.upper()
    try:
        gamma = np.vectorize(lambda n, c: tasks.robustness_ratio(n, c, kind), otypes=[float])(n_vals, c_vals)
        pairs = [
            (f"aggregate_{kind.lower()}_clean", fmt(tasks.aggregate_nmse(c_vals))),
            (f"aggregate_{kind.lower()}_noisy", fmt(tasks.aggregate_nmse(n_vals))),
            ("aggregate_log_gamma", fmt(tasks.aggregate_log_gamma(gamma))),
        ]
    except (UndefinedRatio, ContractViolation) as exc:
        print(f"cannot compare: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    csv_text = grid_csv(row_label, col_label, rows, cols, gamma)
    summary = summary_text(pairs)
    files = {}
    if args.out:
        files[args.out] = csv_text
    if args.summary:
        files[args.summary] = summary
    try:
        write_atomic(files)
    except OSError as exc:
        print(f"cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.out:
        sys.stdout.write(csv_text)
    sys.stdout.write(summary)
    return EXIT_OK


def cmd_validate(args):
    try:
        exp = load_experiment(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    info = resolved(exp)
    for sw in info["sweep"]:
        print(f"{sw['name']}: model={sw['model']} task={sw['task']} N={sw['n']} "
              f"k={sw['fraction']} n={sw['perturb_count']} sigma={sw['sigma']} runs={sw['runs']}")
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="robustrc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"robustrc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every sweep in an experiment file")
    run.add_argument("config")
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--sigma", type=float)
    run.add_argument("--k", type=float)
    run.add_argument("--workers", type=int)
    run.add_argument("--output-dir")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="robustness ratio of two surfaces")
    cmp_.add_argument("clean_csv")
    cmp_.add_argument("noisy_csv")
    cmp_.add_argument("--kind", choices=["MC", "NMSE", "mc", "nmse"], default="NMSE")
    cmp_.add_argument("--out", help="write the ratio surface here instead of stdout")
    cmp_.add_argument("--summary", help="also write the summary block to this file")
    cmp_.set_defaults(func=cmd_compare)

    val = sub.add_parser("validate", help="check an experiment file without running it")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
