"""Command-line entry point ``rcskit``.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bitspace import count_occurrences, derive_seed, generate_porter_thomas
from .circuitsim import (CircuitSpec, GateErrorSpec, calibration_drop, grid_shape,
                         random_calibration, remove_calibration, resolve_params, simulate_ideal,
                         simulate_noisy_trajectories)
from .diagnostics import (HistogramSpec, bit_drift, deviation_asymmetry, size_biased_histogram, size_biased_ks,
                          stationarity_split_test)
from .estimators import (biased_dev_estimate, calibration_effect, calibration_effect_total, dev_estimate,
                         distances, formula77_simplified, t_estimator, xeb)
from .experiment import ConfigError, fmt, load_config, run_experiment
from .io import FormatError, read_any_samples, read_ptable, write_ptable, write_samples
from .noise import NoiseSpec, apply_noise, sample

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _emit(args, record: dict | list, name: str = "result") -> None:
    """Print a flat record (or list of records) as JSON or CSV; mirror to --out-dir."""
    rows = record if isinstance(record, list) else [record]
    if args.format == "json":
        text = json.dumps(record, indent=2, sort_keys=True, default=_jsonable) + "\n"
    else:
        cols = list(rows[0])
        lines = [",".join(cols)] + [",".join(fmt(r[c]) for c in cols) for r in rows]
        text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.{args.format}").write_text(text)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(type(v).__name__)


def _circuit_from_args(args) -> CircuitSpec:
    if args.circuit:
        return CircuitSpec.from_dict(json.loads(Path(args.circuit).read_text()))
    rows, cols = (map(int, args.grid.lower().split("x"))) if args.grid else grid_shape(args.n)
    return CircuitSpec.grid(rows, cols, args.depth, args.pattern, seed=args.seed)


def _noise_from_args(args) -> NoiseSpec | None:
    if getattr(args, "noise", None):
        text = args.noise
        if Path(text).exists():
            text = Path(text).read_text()
        return NoiseSpec.from_dict(json.loads(text))
    if getattr(args, "phi", None) is not None:
        return NoiseSpec.google(args.phi)
    return None


def cmd_gen_pt(args):
    table = generate_porter_thomas(args.seed, args.n)
    write_ptable(args.output, table, binary=args.binary)
    _emit(args, {"n": args.n, "seed": args.seed, "path": args.output}, "gen-pt")


def cmd_simulate(args):
    circ = _circuit_from_args(args)
    params = None
    if args.params:
        params = resolve_params(circ, json.loads(Path(args.params).read_text()))
    table = simulate_ideal(circ, params)
    write_ptable(args.output, table, binary=args.binary)
    g1, g2 = circ.gate_counts
    _emit(args, {"n": circ.n, "depth": circ.depth, "g1": g1, "g2": g2, "path": args.output}, "simulate")


def cmd_sample(args):
    if args.trajectories:
        circ = _circuit_from_args(args)
        errors = GateErrorSpec(args.e1, args.e2, args.eq, args.channel)
        smp, p_no_err = simulate_noisy_trajectories(circ, None, errors, args.N, args.seed)
        write_samples(args.output, smp)
        _emit(args, {"N": args.N, "p_no_err": p_no_err, "path": args.output}, "sample")
        return
    table = read_ptable(args.table)
    smp = sample(table, args.N, args.seed, _noise_from_args(args))
    write_samples(args.output, smp)
    _emit(args, {"N": args.N, "path": args.output}, "sample")


def cmd_analyze(args):
    table = read_ptable(args.table)
    smp = read_any_samples(args.sample)
    counts = count_occurrences(smp)
    x = xeb(smp, table)
    t = t_estimator(counts)
    rec = {"N": smp.N, "xeb": x.value, "xeb_se": x.stderr, "t": t.value, "t2": t.extra["t2"]}
    noise = _noise_from_args(args)
    if noise is not None:
        d = distances(counts, apply_noise(table, noise))
        rec.update(chi2=d.chi2, L1=d.L1, L2=d.L2, KL=d.KL, correlation=d.pearson_correlation, dof=d.dof)
    _emit(args, rec, "analyze")


def cmd_diagnose(args):
    table = read_ptable(args.table)
    smp = read_any_samples(args.sample)
    phi = args.phi if args.phi is not None else max(0.0, xeb(smp, table).value)
    hist = size_biased_histogram(smp, table, HistogramSpec(args.cells, phi=phi))
    model = apply_noise(table, NoiseSpec.google(phi))
    rec = {
        "phi": phi,
        "size_biased_ks_p": size_biased_ks(smp, table, phi).p_value,
        "stationarity_p": stationarity_split_test(smp, args.partitions, args.seed).p_value,
        "bit_drift_p": bit_drift(smp, min(args.groups, smp.N)).p_value,
    }
    asym = deviation_asymmetry(count_occurrences(smp), model, R=args.bootstrap, seed=args.seed)
    rec.update(skewness=asym.statistics["skewness"], asymmetry_p=asym.p_value)
    _emit(args, rec, "diagnose")
    if args.out_dir:
        with (Path(args.out_dir) / "histogram.csv").open("w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "count", "overlay_density"])
            for row in hist.rows():
                w.writerow([fmt(v) for v in row])


def cmd_predict(args):
    rec = {
        "formula77_per_gate": formula77_simplified(args.n, args.g1, args.g2, "per-gate"),
        "formula77_cycle": formula77_simplified(args.n, args.g1, args.g2, "cycle"),
        "dev": dev_estimate(args.n, args.g1, args.g2, args.rel_err),
        "biased_dev": biased_dev_estimate(args.n, args.g1, args.g2, args.t, args.rel_err),
    }
    _emit(args, rec, "predict")


def cmd_calib(args):
    circ = _circuit_from_args(args)
    k = len(circ.occurrences())
    rng = np.random.default_rng(derive_seed(args.seed, "gates"))
    gates = sorted(rng.choice(k, size=min(args.gates, k), replace=False).tolist())
    rows = []
    for j, g in enumerate(gates):
        cal = random_calibration(circ, args.scale, derive_seed(args.seed, "perturb", g), occurrences=[g])
        ratio, se = calibration_drop(circ, cal, remove_calibration(cal, g), args.N, derive_seed(args.seed, "drop", j))
        psi = calibration_effect(cal[g].theta, cal[g].phi)
        rows.append({"occurrence": g, "theta": cal[g].theta, "phi": cal[g].phi, "psi": psi,
                     "measured": ratio, "se": se})
    if args.total:
        cal = random_calibration(circ, args.scale, derive_seed(args.seed, "perturb-all"), occurrences=gates)
        ratio, se = calibration_drop(circ, cal, remove_calibration(cal, gates), args.N, derive_seed(args.seed, "drop-all"))
        r0 = calibration_effect_total((cal[g].theta, cal[g].phi) for g in gates)
        rows.append({"occurrence": -1, "theta": float("nan"), "phi": float("nan"), "psi": r0,
                     "measured": ratio, "se": se})
    _emit(args, rows, "calib-experiment")


def cmd_run(args):
    cfg = load_config(args.config)
    manifest = run_experiment(cfg, threads=args.threads, out_dir=args.out_dir)
    summary = json.loads((Path(args.out_dir or cfg.output_dir) / "summary.json").read_text())
    rec = {"config_hash": manifest.config_hash}
    for k, v in summary["metrics"].items():
        rec[f"{k}_mean"] = v["mean"]
        rec[f"{k}_std"] = v["std"]
    _emit(args, rec, "run")


def cmd_report(args):
    rows = []
    for d in args.runs:
        s = json.loads((Path(d) / "summary.json").read_text())
        for metric, v in sorted(s["metrics"].items()):
            rows.append({"run": str(d), "config_hash": s["config_hash"], "metric": metric,
                         "mean": v["mean"], "std": v["std"], "count": v["count"]})
    if not rows:
        raise ConfigError("runs", "no metrics found")
    _emit(args, rows, "report")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out-dir", default=argparse.SUPPRESS)
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="rcskit", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="json")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    def circuit_args(sp):
        sp.add_argument("--circuit", help="circuit JSON file")
        sp.add_argument("--n", type=int, default=12)
        sp.add_argument("--grid", help="ROWSxCOLS (default: most square factorisation of n)")
        sp.add_argument("--depth", type=int, default=14)
        sp.add_argument("--pattern", default="EFGH")

    sp = add("gen-pt", cmd_gen_pt, "write a Porter-Thomas table")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--binary", action="store_true")
    sp.add_argument("-o", "--output", required=True)

    sp = add("simulate", cmd_simulate, "simulate an ideal circuit and write its table")
    circuit_args(sp)
    sp.add_argument("--params", help="JSON {occurrence: {theta, phi, z_pre, z_post}}")
    sp.add_argument("--binary", action="store_true")
    sp.add_argument("-o", "--output", required=True)

    sp = add("sample", cmd_sample, "sample from a noisy table or noisy circuit trajectories")
    sp.add_argument("--table")
    sp.add_argument("--phi", type=float)
    sp.add_argument("--noise", help="NoiseSpec JSON string or file")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--trajectories", action="store_true")
    circuit_args(sp)
    sp.add_argument("--e1", type=float, default=0.0016)
    sp.add_argument("--e2", type=float, default=0.0062)
    sp.add_argument("--eq", type=float, default=0.038)
    sp.add_argument("--channel", default="depolarizing")
    sp.add_argument("-o", "--output", required=True)

    sp = add("analyze", cmd_analyze, "XEB, T and distances of a sample")
    sp.add_argument("--table", required=True)
    sp.add_argument("--sample", required=True)
    sp.add_argument("--phi", type=float)
    sp.add_argument("--noise")

    sp = add("diagnose", cmd_diagnose, "shape and stationarity diagnostics of a sample")
    sp.add_argument("--table", required=True)
    sp.add_argument("--sample", required=True)
    sp.add_argument("--phi", type=float)
    sp.add_argument("--cells", type=int, default=200)
    sp.add_argument("--partitions", type=int, default=100)
    sp.add_argument("--groups", type=int, default=250)
    sp.add_argument("--bootstrap", type=int, default=99)

    sp = add("predict", cmd_predict, "a priori fidelity predictions")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--g1", type=int, required=True)
    sp.add_argument("--g2", type=int, required=True)
    sp.add_argument("--t", type=float, default=0.0)
    sp.add_argument("--rel-err", type=float, default=0.2)

    sp = add("calib-experiment", cmd_calib, "fidelity drop from removing 2-gate calibration")
    circuit_args(sp)
    sp.add_argument("--gates", type=int, default=20)
    sp.add_argument("--scale", type=float, default=0.4)
    sp.add_argument("--N", type=int, default=20000)
    sp.add_argument("--total", action="store_true", help="also remove all selected gates at once")

    sp = add("run", cmd_run, "run a config-driven experiment")
    sp.add_argument("config")

    sp = add("report", cmd_report, "aggregate run summaries")
    sp.add_argument("runs", nargs="+")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        args.func(args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, FileNotFoundError, OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
