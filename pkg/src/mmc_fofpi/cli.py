"""Batch command-line front end.

Subcommands: simulate, tune, thd, bode, compare. Exit codes: 0 success,
1 configuration error, 2 simulation fault (partial outputs still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import AnalysisError, ConfigurationError
from .fracorder import bode_table
from .signals import thd
from .simkit import run_scenario
from .tuning import tune

EXIT_OK, EXIT_CONFIG, EXIT_FAULT = 0, 1, 2


def _common(parser):
    parser.add_argument("--config", action="append", default=[], metavar="PATH",
                        help="YAML config; repeat to layer files (later wins)")
    parser.add_argument("--out-dir", help="output directory (overrides output.directory)")
    parser.add_argument("--seed", type=int, help="seed for scenario and WOA")
    parser.add_argument("--plots", action="store_true", help="also write SVG line plots")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        dest="overrides", help="override a config leaf by dotted path")


def build_parser():
    parser = argparse.ArgumentParser(prog="mmc-fofpi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one closed-loop scenario")
    _common(p)

    p = sub.add_parser("tune", help="WOA tuning of the configured controller")
    _common(p)

    p = sub.add_parser("compare", help="run two configs on the same scenario, compare THD")
    p.add_argument("config_a")
    p.add_argument("config_b")
    _common(p)

    p = sub.add_parser(
        "thd", help="THD of a (t, value) CSV",
        description="Prints a JSON object with fields thd (ratio), thd_percent, f0_hz, "
                    "fundamental_amplitude, n_periods and harmonic_amplitudes "
                    "(orders 2..max_harmonic).")
    p.add_argument("csv_path")
    p.add_argument("--f0", type=float, default=50.0, help="fundamental frequency (Hz)")
    p.add_argument("--fs", type=float, help="sample rate (Hz); inferred from t if omitted")
    p.add_argument("--max-harmonic", type=int, default=50)

    p = sub.add_parser("bode", help="frequency response of the Oustaloup approximation")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--band", type=float, nargs=2, default=[1e-3, 1e3], metavar=("LO", "HI"))
    p.add_argument("--n-filter", type=int, default=20)
    p.add_argument("--points", type=int, default=121)
    p.add_argument("--out-dir", help="write bode CSV here instead of stdout")
    return parser


def _load(args, paths=None):
    overrides = list(args.overrides)
    if args.out_dir:
        overrides.append(f"output.directory={args.out_dir}")
    if args.seed is not None:
        overrides += [f"scenario.seed={args.seed}", f"woa.seed={args.seed}"]
    if args.plots:
        overrides.append("output.plots=true")
    return cfgmod.load(paths if paths is not None else args.config, overrides)


def _out_dir(cfg) -> Path:
    out = Path(cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


def write_plots(runlog, out: Path, stem: str):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = runlog.t
    panels = {
        "vll": [("v_ll_ab", "v_ab"), ("v_ll_bc", "v_bc"), ("v_ll_ca", "v_ca")],
        "idq": [("i_d", "i_d"), ("i_q", "i_q"), ("i_d_ref", "i_d*"), ("i_q_ref", "i_q*")],
        "gains": [("kp_d", "kp d"), ("kp_q", "kp q"), ("ki_d", "ki d"), ("ki_q", "ki q")],
    }
    paths = []
    for name, series in panels.items():
        fig, ax = plt.subplots(figsize=(8, 3.5))
        for col, label in series:
            ax.plot(t, runlog[col], lw=0.8, label=label)
        ax.set_xlabel("t [s]")
        ax.legend(loc="upper right", fontsize=8)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = out / f"{stem}_{name}.svg"
        fig.savefig(path, format="svg")
        plt.close(fig)
        paths.append(path)
    return paths


def cmd_simulate(args) -> int:
    cfg = _load(args)
    sc = cfgmod.build_scenario(cfg)
    runlog = run_scenario(sc)
    out = _out_dir(cfg)
    stem = f"run_{runlog.fingerprint}"
    runlog.to_csv(out / f"{stem}.csv")
    _write_json(out / f"{stem}_summary.json", runlog.summary)
    if cfg["output"]["plots"]:
        write_plots(runlog, out, stem)
    _print_summary(runlog)
    if runlog.fault:
        print(f"simulation fault at t={runlog.fault['t']:.6g} s: {runlog.fault['kind']}",
              file=sys.stderr)
        return EXIT_FAULT
    return EXIT_OK


def _print_summary(runlog):
    print(f"fingerprint {runlog.fingerprint}  digest {runlog.summary.get('digest')}")
    for seg in runlog.summary.get("segments", []):
        span = f"[{seg['t_start']:g}, {seg['t_end']:g}) s"
        if "thd" in seg:
            print(f"  {span}: THD {seg['thd']['thd']:.6g} ({seg['thd']['thd_percent']:.4g} %)"
                  f"  mean i_d {seg['mean_i_d']:.4g} A  mean i_q {seg['mean_i_q']:.4g} A")
        else:
            print(f"  {span}: {seg['thd_error']}")


def _tune_fingerprint(spec, woa):
    # scenario fingerprint plus a short hash of the search settings
    blob = json.dumps({"kind": spec.kind, "bounds": woa.bounds.tolist(), "pop": woa.pop_size,
                       "iter": woa.max_iter, "b": woa.spiral_b, "seed": woa.seed,
                       "penalties": [spec.sigma_penalty, spec.tracking_tolerance,
                                     spec.tracking_weight]}, sort_keys=True)
    search = hashlib.sha256(blob.encode()).hexdigest()[:8]
    return f"{spec.kind}_{spec.scenario.fingerprint()}_{search}"


def cmd_tune(args) -> int:
    cfg = _load(args)
    spec, woa, workers = cfgmod.build_tuning(cfg)
    out = _out_dir(cfg)
    fp = _tune_fingerprint(spec, woa)
    conv_path = out / f"convergence_{fp}.csv"
    with conv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "best_fitness", "mean_fitness", "elapsed_s"])

        def sink(it, best, mean, elapsed):
            writer.writerow([it, repr(best), repr(mean), f"{elapsed:.3f}"])
            fh.flush()
            print(f"iter {it:4d}  best {best:.6g}  mean {mean:.6g}", file=sys.stderr)

        result, ctrl = tune(spec, woa, sink, workers)
    fragment = cfgmod.controller_fragment(ctrl)
    fragment_text = (f"# best fitness {result.best_f!r}\n"
                     f"# vector {json.dumps([float(v) for v in result.best_x])}\n"
                     + cfgmod.dump(fragment))
    (out / f"best_{fp}.yaml").write_text(fragment_text)
    print(f"best fitness {result.best_f:.6g}")
    print(f"wrote {conv_path} and {out / f'best_{fp}.yaml'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg_a = _load(args, [*args.config, args.config_a])
    cfg_b = _load(args, [*args.config, args.config_b])
    for block in ("scenario", "plant", "fractional"):
        if cfg_a[block] != cfg_b[block]:
            raise ConfigurationError(f"configs differ in the '{block}' block; "
                                     "comparison must use the same scenario")
    runs = {}
    for label, cfg in (("A", cfg_a), ("B", cfg_b)):
        runs[label] = run_scenario(cfgmod.build_scenario(cfg))
    names = {k: f"{k}:{c['controller']['kind'].upper()}" for k, c in (("A", cfg_a), ("B", cfg_b))}
    print(f"{'segment':<18}{names['A']:>16}{names['B']:>16}   winner")
    rows = []
    for seg_a, seg_b in zip(runs["A"].summary["segments"], runs["B"].summary["segments"]):
        ta = seg_a.get("thd", {}).get("thd", float("inf"))
        tb = seg_b.get("thd", {}).get("thd", float("inf"))
        winner = names["A"] if ta < tb else names["B"] if tb < ta else "tie"
        span = f"[{seg_a['t_start']:g}, {seg_a['t_end']:g})"
        print(f"{span:<18}{ta:>16.6g}{tb:>16.6g}   {winner}")
        rows.append({"segment": span, "thd_a": ta, "thd_b": tb, "winner": winner})
    out = _out_dir(cfg_a)
    _write_json(out / f"compare_{runs['A'].fingerprint}_{runs['B'].fingerprint}.json", rows)
    faulted = [k for k, r in runs.items() if r.fault]
    if faulted:
        print(f"simulation fault in {', '.join(faulted)}", file=sys.stderr)
        return EXIT_FAULT
    return EXIT_OK


def cmd_thd(args) -> int:
    path = Path(args.csv_path)
    if not path.is_file():
        raise ConfigurationError(f"file not found: {path}")
    data = np.genfromtxt(path, delimiter=",", comments="#")
    if data.ndim != 2 or data.shape[1] < 2:
        raise ConfigurationError("expected a CSV with columns t,value")
    data = data[np.all(np.isfinite(data[:, :2]), axis=1)]
    t, x = data[:, 0], data[:, 1]
    fs = args.fs
    if fs is None:
        fs = 1.0 / float(np.median(np.diff(t)))
        fs = round(fs, 6)
    report = thd(x, fs, args.f0, args.max_harmonic)
    print(json.dumps(report.as_dict(), indent=2))
    return EXIT_OK


def cmd_bode(args) -> int:
    table = bode_table(args.alpha, tuple(args.band), args.n_filter, args.points)
    header = "omega_rad_s,magnitude_db,phase_deg"
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"bode_a{args.alpha:g}_n{args.n_filter}.csv"
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.12g")
        print(f"wrote {path}")
    else:
        np.savetxt(sys.stdout, table, delimiter=",", header=header, comments="", fmt="%.12g")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "tune": cmd_tune, "compare": cmd_compare,
            "thd": cmd_thd, "bode": cmd_bode}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
