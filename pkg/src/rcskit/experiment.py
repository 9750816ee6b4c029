"""Config-driven repeated experiments with reproducible seeds and outputs.

Config schema (JSON, ``schema_version`` 1)::

    {
      "schema_version": 1,
      "master_seed": 7,
      "source": {"kind": "porter_thomas", "n": 12, "circuits": 10}
              | {"kind": "synthetic", "n": 30}
              | {"kind": "simulate", "circuit": {...}, "params": {...},
                 "trajectories": {"e1": ..., "e2": ..., "eq": ...}}
              | {"kind": "file", "path": "table.txt"},
      "noise": {"kind": "google", "phi": 0.3701},
      "N": 500000,
      "R": 100,
      "analyses": [{"name": "xeb"}, {"name": "t"}, {"name": "distances"}, ...],
      "output_dir": "out"
    }

``circuits`` (porter_thomas only) sets how many distinct tables are cycled
over repetitions; omitted means a fresh table per repetition.  Per-rep seeds
are ``derive_seed(master_seed, rep, stage)``.  ``output_dir`` is not part of
the config hash.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .bitspace import (DENSE_MAX_QUBITS, ProbabilityTable, SyntheticCircuit, count_occurrences, derive_seed,
                       generate_porter_thomas)
from .circuitsim import CircuitSpec, GateErrorSpec, resolve_params, simulate_ideal, simulate_noisy_trajectories
from .diagnostics import (bit_drift, chi2_model_test, deviation_asymmetry, size_biased_ks,
                          stationarity_split_test)
from .estimators import distances, t_estimator, xeb
from .io import read_ptable
from .noise import NoiseSpec, apply_noise, sample

SCHEMA_VERSION = 1
SOURCE_KINDS = ("porter_thomas", "synthetic", "simulate", "file")
ANALYSES = ("xeb", "t", "distances", "chi2_model", "size_biased_ks", "stationarity", "bit_drift",
            "deviation_asymmetry")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ExperimentConfig:
    master_seed: int
    source: dict
    noise: NoiseSpec | None
    N: int
    R: int = 1
    analyses: list = field(default_factory=lambda: [{"name": "xeb"}, {"name": "t"}])
    output_dir: str = "out"
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("$", "config must be a JSON object")
        unknown = set(d) - {"schema_version", "master_seed", "source", "noise", "N", "R", "analyses",
                            "output_dir"}
        if unknown:
            raise ConfigError(f"$.{sorted(unknown)[0]}", "unknown field")
        if d.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError("$.schema_version", f"unsupported version {d.get('schema_version')!r}")
        for key in ("master_seed", "N"):
            if not isinstance(d.get(key), int) or isinstance(d.get(key), bool):
                raise ConfigError(f"$.{key}", "required integer")
        if d["N"] < 1:
            raise ConfigError("$.N", "must be >= 1")
        R = d.get("R", 1)
        if not isinstance(R, int) or R < 1:
            raise ConfigError("$.R", "must be an integer >= 1")
        src = d.get("source")
        if not isinstance(src, dict) or src.get("kind") not in SOURCE_KINDS:
            raise ConfigError("$.source.kind", f"must be one of {SOURCE_KINDS}")
        if src["kind"] in ("porter_thomas", "synthetic") and not isinstance(src.get("n"), int):
            raise ConfigError("$.source.n", "required integer")
        if src["kind"] == "porter_thomas" and not 2 <= src["n"] <= DENSE_MAX_QUBITS:
            raise ConfigError("$.source.n", f"must lie in [2, {DENSE_MAX_QUBITS}]")
        if src["kind"] == "file" and not isinstance(src.get("path"), str):
            raise ConfigError("$.source.path", "required string")
        if src["kind"] == "simulate":
            try:
                CircuitSpec.from_dict(src.get("circuit") or {})
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError("$.source.circuit", str(exc)) from None
            if src.get("trajectories") is not None:
                try:
                    GateErrorSpec(**src["trajectories"])
                except (TypeError, ValueError) as exc:
                    raise ConfigError("$.source.trajectories", str(exc)) from None
        if "circuits" in src and (not isinstance(src["circuits"], int) or src["circuits"] < 1):
            raise ConfigError("$.source.circuits", "must be a positive integer")
        noise = None
        if d.get("noise") is not None:
            try:
                noise = NoiseSpec.from_dict(d["noise"])
            except (TypeError, ValueError, KeyError) as exc:
                raise ConfigError("$.noise", str(exc)) from None
        analyses = d.get("analyses", [{"name": "xeb"}, {"name": "t"}])
        if not isinstance(analyses, list):
            raise ConfigError("$.analyses", "must be a list")
        for i, a in enumerate(analyses):
            if not isinstance(a, dict) or a.get("name") not in ANALYSES:
                raise ConfigError(f"$.analyses[{i}].name", f"must be one of {ANALYSES}")
        return cls(d["master_seed"], src, noise, d["N"], R, analyses, d.get("output_dir", "out"))

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "master_seed": self.master_seed, "source": self.source,
                "noise": self.noise.to_dict() if self.noise else None, "N": self.N, "R": self.R,
                "analyses": self.analyses, "output_dir": self.output_dir}

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunManifest:
    config_hash: str
    seeds: list
    artifacts: list
    version: str = __version__

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "seeds": self.seeds, "artifacts": self.artifacts,
                "version": self.version}


def _table_for_rep(cfg: ExperimentConfig, rep: int, cache: dict):
    src = cfg.source
    kind = src["kind"]
    if kind == "porter_thomas":
        k = src.get("circuits")
        idx = rep if k is None else rep % k
        if idx not in cache:
            cache.clear()
            cache[idx] = generate_porter_thomas(derive_seed(cfg.master_seed, idx, "table"), src["n"])
        return cache[idx]
    if "fixed" not in cache:
        if kind == "synthetic":
            seed = src.get("seed", derive_seed(cfg.master_seed, "synthetic"))
            cache["fixed"] = SyntheticCircuit(seed, src["n"], src.get("normalization_mode", "expected"))
        elif kind == "file":
            path = Path(src["path"])
            if not path.exists():
                raise FileNotFoundError(f"table file {path} does not exist")
            cache["fixed"] = read_ptable(path)
        else:
            circ = CircuitSpec.from_dict(src["circuit"])
            cache["circuit"] = circ
            cache["params"] = resolve_params(circ, src.get("params"))
            cache["fixed"] = simulate_ideal(circ, cache["params"])
    return cache["fixed"]


def _run_rep(cfg: ExperimentConfig, rep: int, cache: dict) -> dict[str, Any]:
    table = _table_for_rep(cfg, rep, cache)
    seed = derive_seed(cfg.master_seed, rep, "sample")
    src = cfg.source
    if src["kind"] == "simulate" and src.get("trajectories") is not None:
        smp, p_no_err = simulate_noisy_trajectories(cache["circuit"], cache["params"],
                                                    GateErrorSpec(**src["trajectories"]), cfg.N, seed)
        row = {"p_no_err": p_no_err}
    else:
        smp = sample(table, cfg.N, seed, cfg.noise)
        row = {}
    model = None
    if isinstance(table, ProbabilityTable):
        model = apply_noise(table, cfg.noise) if cfg.noise is not None else table
    phi = cfg.noise.phi if cfg.noise is not None else 1.0
    for a in cfg.analyses:
        name = a["name"]
        if name == "xeb":
            r = xeb(smp, table)
            row.update(xeb=r.value, xeb_se=r.stderr)
        elif name == "t":
            r = t_estimator(count_occurrences(smp))
            row.update(t=r.value, t2=r.extra["t2"])
        elif name in ("distances", "chi2_model", "deviation_asymmetry") and model is None:
            raise ConfigError(f"$.analyses[{name}]", "needs a dense table source")
        elif name == "distances":
            r = distances(count_occurrences(smp), model)
            row.update(chi2=r.chi2, L1=r.L1, L2=r.L2, KL=r.KL, correlation=r.pearson_correlation)
        elif name == "chi2_model":
            row["chi2_model_p"] = chi2_model_test(count_occurrences(smp), model).p_value
        elif name == "size_biased_ks":
            row["size_biased_ks_p"] = size_biased_ks(smp, table, a.get("phi", phi)).p_value
        elif name == "stationarity":
            row["stationarity_p"] = stationarity_split_test(smp, a.get("partitions", 100),
                                                            derive_seed(cfg.master_seed, rep, "stationarity")).p_value
        elif name == "bit_drift":
            row["bit_drift_p"] = bit_drift(smp, min(a.get("groups", 250), smp.N)).p_value
        elif name == "deviation_asymmetry":
            r = deviation_asymmetry(count_occurrences(smp), model, R=a.get("R", 99),
                                    seed=derive_seed(cfg.master_seed, rep, "asymmetry"))
            row.update(skewness=r.statistics["skewness"], asymmetry_p=r.p_value)
    return row


def fmt(v) -> str:
    """Round-trip decimal rendering for CSV cells."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def summarize(rows: list[dict]) -> dict:
    keys = [k for k in rows[0] if isinstance(rows[0][k], (int, float, np.floating))]
    out = {}
    for k in keys:
        v = np.array([r[k] for r in rows], dtype=float)
        out[k] = {"mean": float(math.fsum(v) / v.size),
                  "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
                  "count": int(v.size)}
    return out


def run_experiment(cfg: ExperimentConfig, threads: int = 1, out_dir: str | None = None) -> RunManifest:
    """Execute all repetitions and write results.csv, summary.json and manifest.json."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()
    seeds = [{"rep": r, "sample": derive_seed(cfg.master_seed, r, "sample")} for r in range(cfg.R)]

    if threads > 1 and cfg.source["kind"] == "porter_thomas" and cfg.source.get("circuits") is None:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(lambda r: _run_rep(cfg, r, {}), range(cfg.R)))
    else:
        cache: dict = {}
        rows = [_run_rep(cfg, r, cache) for r in range(cfg.R)]

    buf = io.StringIO()
    buf.write(f"# config_hash={h}\n")
    cols = ["rep", "seed"] + list(rows[0])
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for s, row in zip(seeds, rows):
        w.writerow([s["rep"], s["sample"]] + [fmt(row[c]) for c in cols[2:]])
    (out / "results.csv").write_text(buf.getvalue())

    summary = {"config_hash": h, "N": cfg.N, "R": cfg.R, "metrics": summarize(rows)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    manifest = RunManifest(h, seeds, ["results.csv", "summary.json", "config.json"])
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    return manifest


def load_config(path) -> ExperimentConfig:
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("$", f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    return ExperimentConfig.from_dict(d)
