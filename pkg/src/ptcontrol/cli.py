"""Command-line front end: run scenarios and write trajectories, metrics and plot scripts.

Exit status: 0 success, 2 invalid scenario, 3 diverged run, 4 I/O failure.
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DivergedError
from .scenario import BUNDLED, bundled_scenario, dump_scenario, parse_scenario
from .sim import metrics, simulate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3
EXIT_IO = 4

EXAMPLE_GROUPS = {
    "1": ("example1", "example1_guas"),
    "2": ("example2", "example2_noise"),
    "3": ("example3",),
}


def trajectory_columns(result):
    n = result.n
    names = ["t"] + [f"x{i}" for i in range(1, n + 1)] + ["u"]
    cols = [result.t[:, None], result.x, result.u[:, None]]
    if result.x_hat is not None:
        names += [f"xhat{i}" for i in range(1, n + 1)] + ["err_norm"]
        cols += [result.x_hat, result.err_norm[:, None]]
    if result.s is not None:
        names.append("s")
        cols.append(result.s[:, None])
    return names, np.hstack(cols)


def write_trajectory(path, result):
    names, data = trajectory_columns(result)
    # 17 significant digits round-trip doubles exactly
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        np.savetxt(fh, data, fmt="%.17g", delimiter=",", header=",".join(names),
                   comments="", newline="\n")


def _fmt(v, missing):
    return missing if v is None else "%.17g" % v


def metrics_text(m):
    return (
        f"settling_time = {_fmt(m.settling_time, 'not_settled')}\n"
        f"max_abs_u = {_fmt(m.max_abs_u, 'none')}\n"
        f"terminal_state_norm = {_fmt(m.terminal_state_norm, 'none')}\n"
        f"terminal_error_norm = {_fmt(m.terminal_error_norm, 'none')}\n"
    )


PLOT_SCRIPT = '''\
"""Plot trajectory.csv next to this script (needs matplotlib)."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
with open(here / "trajectory.csv", newline="") as fh:
    rows = list(csv.reader(fh))
header, data = rows[0], [[float(v) for v in r] for r in rows[1:]]
col = {{name: [r[i] for r in data] for i, name in enumerate(header)}}

panels = [[c for c in header if c.startswith("x") and not c.startswith("xhat")], ["u"]]
if "err_norm" in col:
    panels.append(["err_norm"])
if "s" in col:
    panels.append(["s"])
fig, axes = plt.subplots(len(panels), 1, sharex=True, figsize=(7, 2.4 * len(panels)))
for ax, names in zip(axes, panels):
    for name in names:
        ax.plot(col["t"], col[name], label=name)
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
for t_event in {events!r}:
    for ax in axes:
        ax.axvline(t_event, color="gray", lw=0.8, ls="--")
axes[-1].set_xlabel("t [s]")
fig.suptitle({title!r})
fig.tight_layout()
fig.savefig(here / "trajectory.png", dpi=120)
'''


def write_outputs(out_dir, name, result, tol):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory(out_dir / "trajectory.csv", result)
    m = metrics(result, tol)
    (out_dir / "metrics.txt").write_text(metrics_text(m), encoding="utf-8")
    events = [float(t) for t, _ in result.events]
    (out_dir / "plot.py").write_text(PLOT_SCRIPT.format(events=events, title=name),
                                     encoding="utf-8")
    return m


def run_scenario(scenario, out_dir, tol=1e-2, validate=True):
    """Simulate and write outputs; returns (exit status, message)."""
    try:
        loop = scenario.build(check=validate)
        result = simulate(loop, validate=validate)
    except ConfigurationError as exc:
        return EXIT_INVALID, f"invalid scenario: {exc}"
    except DivergedError as exc:
        try:
            if exc.result is not None:
                write_outputs(out_dir, scenario.name, exc.result, tol)
        except OSError as io:
            return EXIT_IO, f"{io.filename}: {io.strerror}"
        return EXIT_DIVERGED, f"{scenario.name}: diverged ({exc}); partial output in {out_dir}"
    try:
        m = write_outputs(out_dir, scenario.name, result, tol)
    except OSError as io:
        return EXIT_IO, f"{io.filename}: {io.strerror}"
    return EXIT_OK, f"{scenario.name} -> {out_dir}\n{metrics_text(m)}"


def _load(path, validate):
    """(scenario, exit status, message); unreadable files are I/O failures."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        return None, EXIT_IO, f"{path}: {exc.strerror}"
    try:
        return parse_scenario(text, str(path), check=validate), EXIT_OK, None
    except ConfigurationError as exc:
        return None, EXIT_INVALID, str(exc)


def cmd_run(args):
    sc, code, err = _load(args.scenario, not args.no_validate)
    if sc is None:
        print(err, file=sys.stderr)
        return code
    # all signal sources are closed-form functions of time, so runs are
    # reproducible with or without --seedless
    sc = sc.with_overrides(dt=args.dt, t_p=args.tp)
    out = Path(args.out) if args.out else Path("out") / sc.name
    code, msg = run_scenario(sc, out, args.tol, validate=not args.no_validate)
    print(msg, file=sys.stdout if code == EXIT_OK else sys.stderr)
    return code


def _batch_worker(job):
    path, out, tol = job
    sc, code, err = _load(path, True)
    if sc is None:
        return path, code, err
    code, msg = run_scenario(sc, out, tol)
    return path, code, msg


def cmd_batch(args):
    src = Path(args.directory)
    files = sorted(src.glob("*.scenario"))
    if not files:
        print(f"{src}: no *.scenario files", file=sys.stderr)
        return EXIT_IO
    out_root = Path(args.out) if args.out else src / "results"
    jobs = [(str(f), str(out_root / f.stem), args.tol) for f in files]
    worst = EXIT_OK
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for path, code, msg in pool.map(_batch_worker, jobs):
            print(f"[{'ok' if code == EXIT_OK else 'FAIL'}] {path}: {msg.splitlines()[0]}")
            worst = max(worst, code)
    return worst


def cmd_examples(args):
    names = EXAMPLE_GROUPS[args.which] if args.which else sum(EXAMPLE_GROUPS.values(), ())
    out_root = Path(args.out) if args.out else Path("out")
    worst = EXIT_OK
    for name in names:
        code, msg = run_scenario(bundled_scenario(name), out_root / name, args.tol)
        print(msg, file=sys.stdout if code == EXIT_OK else sys.stderr)
        worst = max(worst, code)
    return worst


def cmd_dump(args):
    try:
        text = dump_scenario(bundled_scenario(args.name))
    except ConfigurationError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args):
    sc, code, err = _load(args.scenario, True)
    if sc is None:
        print(err, file=sys.stderr)
        return code
    print(f"{args.scenario}: ok ({sc.name}, mode={sc.mode}, n={sc.plant.n})")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ptcontrol", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario file")
    r.add_argument("scenario")
    r.add_argument("--out", help="output directory (default out/<name>)")
    r.add_argument("--dt", type=float, help="override the base step")
    r.add_argument("--tp", type=float, help="override the prescribed time t_p")
    r.add_argument("--seedless", action="store_true",
                   help="accepted for compatibility; all noise is deterministic")
    r.add_argument("--no-validate", action="store_true",
                   help="skip gain admissibility checks (for failure demonstrations)")
    r.add_argument("--tol", type=float, default=1e-2, help="settling tolerance")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("batch", help="run every *.scenario in a directory")
    b.add_argument("directory")
    b.add_argument("--out", help="output root (default <directory>/results)")
    b.add_argument("--jobs", type=int, default=None, help="worker processes")
    b.add_argument("--tol", type=float, default=1e-2)
    b.set_defaults(func=cmd_batch)

    e = sub.add_parser("examples", help="run the bundled example scenarios")
    e.add_argument("which", nargs="?", choices=sorted(EXAMPLE_GROUPS))
    e.add_argument("--out", help="output root (default out/)")
    e.add_argument("--tol", type=float, default=1e-2)
    e.set_defaults(func=cmd_examples)

    d = sub.add_parser("dump-scenario", help="print a bundled scenario file")
    d.add_argument("name", help=", ".join(BUNDLED))
    d.set_defaults(func=cmd_dump)

    c = sub.add_parser("check", help="validate a scenario file without running it")
    c.add_argument("scenario")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
