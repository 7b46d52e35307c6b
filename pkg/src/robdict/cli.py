"""``robdict`` command-line pipeline.

Each command reads upstream artifacts from the output directory and writes
its own, so every stage can be inspected and rerun::

    robdict generate   --config run.json     # train/test snapshot files
    robdict dissim     --config run.json     # train dissimilarity matrix
    robdict cluster    --config run.json     # k-medoids on that matrix
    robdict select     --config run.json     # n_s sub-medoids per cluster
    robdict build      --config run.json     # local dictionary + matched global ROB
    robdict evaluate   --config run.json     # test errors and gains
    robdict admissible --config grid.json    # hyperparameter grid + verdict
    robdict compare    --config run.json     # six-strategy table, correlations
    robdict mds        --config run.json     # classical MDS coordinates

Exit codes: 0 success, 2 configuration or missing input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import clustering as cl
from . import dictionary as dic
from . import evaluation as ev
from . import geometry as geo
from . import problems as pb

log = logging.getLogger("robdict")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    pass


@dataclass
class PipelineConfig:
    problem: str = "heat1d"
    heat1d: dict = field(default_factory=dict)
    advection2d: dict = field(default_factory=dict)
    n_train: int | None = None
    measure: str = "sine"
    n: int = 1
    by: str | None = None
    K: int | None = None
    N: int | None = None
    n_s: int | None = None
    grid: dict | None = None
    budget: int = 20
    eta_star: float = 0.35
    G_r_star: float = 2.0
    E: float = 0.75
    K_max: int = 20
    accuracy_anchor: list = field(default_factory=lambda: [6, 0.8])
    restarts: int = 10
    seeds: dict = field(default_factory=lambda: {"data": 0, "clustering": 0})
    mds_dim: int = 2
    out: str = "robdict_out"

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not (self.problem in ("heat1d", "advection2d") or self.problem.startswith("import:")):
            raise ConfigError(f"problem must be heat1d, advection2d or import:<path>, got {self.problem!r}")
        if self.measure not in geo.MEASURES:
            raise ConfigError(f"measure must be one of {geo.MEASURES}")
        single = any(v is not None for v in (self.K, self.N, self.n_s))
        if single and self.grid is not None:
            raise ConfigError("grid and single-run (K, N, n_s) settings are mutually exclusive")
        for name in ("n", "restarts", "K_max", "mds_dim", "K", "N", "n_s", "n_train"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or v < 1):
                raise ConfigError(f"{name} must be an integer >= 1")
        if not isinstance(self.budget, int) or self.budget < 0:
            raise ConfigError("budget must be an integer >= 0")
        for name in ("eta_star", "G_r_star", "E"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.grid is not None:
            for key in ("K", "N"):
                r = self.grid.get(key)
                if not (isinstance(r, list) and len(r) == 2 and 1 <= r[0] <= r[1]):
                    raise ConfigError(f"grid.{key} must be an inclusive [lo, hi] range")
        if self.by not in (None, "trajectory", "column"):
            raise ConfigError("by must be 'trajectory' or 'column'")

    @property
    def grouping(self) -> str:
        if self.by is not None:
            return self.by
        return "column" if self.problem == "advection2d" else "trajectory"

    @property
    def n_s_value(self) -> int:
        return self.n_s if self.n_s is not None else self.require("N")

    def require(self, name: str):
        v = getattr(self, name)
        if v is None:
            raise ConfigError(f"this command needs '{name}' in the config")
        return v

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def provenance(self) -> dict:
        return {"config_hash": self.digest(), "seeds": dict(self.seeds)}


def load_config(path: str | None, seed: int | None, out: str | None) -> PipelineConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if seed is not None:
        raw["seeds"] = {"data": seed, "clustering": seed}
    if out is not None:
        raw["out"] = out
    try:
        return PipelineConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# artifact helpers


def _need(path: Path, producer: str) -> Path:
    if not path.exists():
        raise ConfigError(f"missing input {path} (produced by 'robdict {producer}')")
    return path


def _suffix(cfg: PipelineConfig) -> str:
    return cfg.measure if cfg.measure not in ("sine", "grassmann") else f"{cfg.measure}{cfg.n}"


def _train(cfg, out):
    return pb.import_snapshots(_need(out / "train.robsnap", "generate"))


def _test(cfg, out):
    return pb.import_snapshots(_need(out / "test.robsnap", "generate"))


def _dissim(cfg, out):
    return geo.load_dissimilarity(_need(out / f"dissim_{_suffix(cfg)}.csv", "dissim"))


def _clustering(cfg, out):
    return cl.load_clustering(_need(out / f"clustering_{_suffix(cfg)}.json", "cluster"))


def _csv_with_header(path: Path, header: dict, body_writer) -> None:
    import io
    buf = io.StringIO()
    body_writer(buf)
    path.write_text("# " + json.dumps(header, sort_keys=True) + "\n" + buf.getvalue())


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg: PipelineConfig, out: Path) -> dict:
    seed = cfg.seeds.get("data", 0)
    try:
        if cfg.problem == "heat1d":
            h = {"n_samples": 1000, "n_nodes": 2000, **cfg.heat1d}
            s = pb.generate_heat1d_dataset(h.pop("n_samples"), h.pop("n_nodes"), seed, **h)
            n_train = cfg.n_train or s.n_trajectories // 2
        elif cfg.problem == "advection2d":
            s = pb.generate_advection2d_dataset(**cfg.advection2d)
            n_train = cfg.n_train
        else:
            src = Path(cfg.problem[len("import:"):])
            s = pb.import_snapshots(_need(src, "an external solver export"))
            n_train = cfg.n_train
    except TypeError as exc:
        raise ConfigError(f"bad {cfg.problem} parameters: {exc}") from exc
    prov = cfg.provenance()
    written = {"train": s}
    if n_train is not None and n_train < s.n_trajectories:
        written = dict(zip(("train", "test"), pb.split_snapshot_set(s, n_train, seed)))
    stale = out / "test.robsnap"
    if "test" not in written and stale.exists():
        stale.unlink()
        stale.with_suffix(".meta.json").unlink(missing_ok=True)
    checks = {}
    for name, part in written.items():
        path = out / f"{name}.robsnap"
        pb.export_snapshots(part, path, {"provenance": prov})
        checks[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
    manifest = {"problem": cfg.problem, "shape": [s.n_dof, s.n_columns],
                "trajectories": {k: v.n_trajectories for k, v in written.items()},
                "sha256": checks, "provenance": prov}
    ev.write_json(out / "generate.json", manifest)
    return manifest


def cmd_dissim(cfg, out) -> dict:
    train = _train(cfg, out)
    D = geo.dissimilarity_matrix(train, cfg.measure, cfg.n, cfg.grouping)
    path = out / f"dissim_{_suffix(cfg)}.csv"
    geo.save_dissimilarity(D, path, {"by": cfg.grouping, "provenance": cfg.provenance()})
    return {"file": path.name, "m": D.m}


def cmd_cluster(cfg, out) -> dict:
    D = _dissim(cfg, out)
    c = cl.pam(D, cfg.require("K"), cfg.restarts, cfg.seeds.get("clustering", 0))
    cl.save_clustering(c, out / f"clustering_{_suffix(cfg)}.json", {"provenance": cfg.provenance()})
    return {"K": c.K, "cost": c.cost, "sizes": np.bincount(c.labels, minlength=c.K).tolist()}


def cmd_select(cfg, out) -> dict:
    D, c = _dissim(cfg, out), _clustering(cfg, out)
    sel = cl.select_snapshots(D, c, cfg.n_s_value)
    obj = {"n_s": cfg.n_s_value, "selection": sel, "provenance": cfg.provenance()}
    ev.write_json(out / f"selection_{_suffix(cfg)}.json", obj)
    return {"selected": sum(len(g) for g in sel)}


def _items_set(cfg, s):
    return s.split_columns() if cfg.grouping == "column" else s


def cmd_build(cfg, out) -> dict:
    train = _items_set(cfg, _train(cfg, out))
    c = _clustering(cfg, out)
    sel_path = _need(out / f"selection_{_suffix(cfg)}.json", "select")
    sel = json.loads(sel_path.read_text())["selection"]
    d = dic.build_dictionary(train, c, sel, cfg.require("N"))
    g = dic.build_global_rom(train, [i for grp in sel for i in grp], cfg.N)
    dic.save_dictionary(d, out / f"dictionary_{_suffix(cfg)}", {"provenance": cfg.provenance()})
    dic.save_basis(g, out / f"global_{_suffix(cfg)}.robsnap", {"provenance": cfg.provenance()})
    return {"K": d.K, "N": d.N, "n_s": d.hyper[2]}


def _test_to_medoids(cfg, train, test, medoids):
    scaler = None
    if cfg.measure == "euclid_parameter":
        scaler = geo.ParameterScaler.fit(pb.parameter_vectors(train, cfg.grouping))
    return geo.cross_dissimilarity(test, train, cfg.measure, cfg.n, cfg.grouping, scaler,
                                   b_indices=medoids)


def cmd_evaluate(cfg, out) -> dict:
    train, test = _train(cfg, out), _test(cfg, out)
    d = dic.load_dictionary(_need(out / f"dictionary_{_suffix(cfg)}", "build"))
    g = dic.load_basis(_need(out / f"global_{_suffix(cfg)}.robsnap", "build"))
    dm = _test_to_medoids(cfg, train, test, d.medoid_indices)
    summ = ev.evaluate_errors(test, d, dm, cfg.grouping)
    gains = ev.gain_samples(test, d, g, dm, cfg.grouping)
    res = {"errors": summ.row(), "gain_mean": gains.mean, "gain_median": float(np.median(gains.gains)),
           "gain_cv": gains.cv, "n_floored": gains.n_floored, "hyper": list(d.hyper),
           "provenance": cfg.provenance()}
    ev.write_json(out / f"evaluation_{_suffix(cfg)}.json", res)

    def body(fh):
        fh.write("eta,gain,label\n")
        labels = np.repeat(summ.labels, [b.shape[1] for b in test.blocks(cfg.grouping)])
        for e, gg, lab in zip(summ.eta, gains.gains, labels):
            fh.write(f"{e!r},{gg!r},{int(lab)}\n")
    _csv_with_header(out / f"errors_{_suffix(cfg)}.csv", cfg.provenance(), body)
    return res


def cmd_admissible(cfg, out) -> dict:
    grid = cfg.require("grid")
    train, test = _train(cfg, out), _test(cfg, out)
    D = _dissim(cfg, out)
    model = ev.fit_accuracy_model(1.0, cfg.accuracy_anchor[0], cfg.accuracy_anchor[1], cfg.K_max)
    rep = ev.admissible_set(
        train, test, range(grid["K"][0], grid["K"][1] + 1), range(grid["N"][0], grid["N"][1] + 1),
        cfg.budget, cfg.eta_star, cfg.G_r_star, cfg.E, model, measure=cfg.measure, n=cfg.n,
        by=cfg.grouping, restarts=cfg.restarts, seed=cfg.seeds.get("clustering", 0), D=D)
    obj = rep.to_json()
    obj["provenance"] = cfg.provenance()
    ev.write_json(out / "admissible.json", obj)
    rows = obj["rows"]

    def body(fh):
        fh.write(",".join(rows[0]) + "\n")
        for r in rows:
            fh.write(",".join("" if r[k] is None else str(r[k]) for k in rows[0]) + "\n")
    _csv_with_header(out / "admissible.csv", cfg.provenance(), body)
    print(rep.verdict())
    return {"verdict": rep.verdict(), "admissible": obj["admissible"]}


def cmd_compare(cfg, out) -> dict:
    train, test = _train(cfg, out), _test(cfg, out)
    K, N = cfg.require("K"), cfg.require("N")
    scaler = geo.ParameterScaler.fit(pb.parameter_vectors(train))
    cross = {m: geo.cross_dissimilarity(test, train, m, cfg.n, scaler=scaler)
             for m, _ in ev.STRATEGY_MEASURES}
    table = ev.compare_strategies(train, test, K, N, cfg.n_s_value, seed=cfg.seeds.get("clustering", 0),
                                  restarts=cfg.restarts, n=cfg.n, cross=cross)
    print(table.format())
    best = table["ROM dictionary 3"]
    near = {m: ev.nearest_snapshot_dissimilarity(cross[m], best.selected) for m in cross}
    corr = ev.correlation_report(best.summary.eta, near)
    obj = {"hyper": [K, N, cfg.n_s_value], "rows": table.rows(),
           "correlations": {k: asdict(v) for k, v in corr.items()}, "provenance": cfg.provenance()}
    ev.write_json(out / "compare.json", obj)

    def table_body(fh):
        fh.write("strategy,dissimilarity,q1,median,q3,mean\n")
        for r in table.rows():
            fh.write(f"{r['strategy']},{r['dissimilarity']},{r['q1']!r},{r['median']!r},{r['q3']!r},{r['mean']!r}\n")

    def samples_body(fh):
        fh.write(",".join(r.name for r in table.results) + "\n")
        for i in range(len(table.results[0].summary.eta)):
            fh.write(",".join(repr(float(r.summary.eta[i])) for r in table.results) + "\n")

    def scatter_body(fh):
        names = list(near)
        fh.write("eta," + ",".join(names) + "\n")
        for i, e in enumerate(best.summary.eta):
            fh.write(repr(float(e)) + "," + ",".join(repr(float(near[k][i])) for k in names) + "\n")
    prov = cfg.provenance()
    _csv_with_header(out / "compare.csv", prov, table_body)
    _csv_with_header(out / "compare_samples.csv", prov, samples_body)
    _csv_with_header(out / "correlations.csv", prov, scatter_body)
    return obj


def cmd_mds(cfg, out) -> dict:
    D = _dissim(cfg, out)
    coords, vals = ev.classical_mds(D, cfg.mds_dim)
    cpath = out / f"clustering_{_suffix(cfg)}.json"
    labels = cl.load_clustering(cpath).labels if cpath.exists() else None

    def body(fh):
        cols = [f"x{j}" for j in range(coords.shape[1])] + (["label"] if labels is not None else [])
        fh.write(",".join(cols) + "\n")
        for i, row in enumerate(coords):
            fh.write(",".join(repr(float(x)) for x in row)
                     + (f",{int(labels[i])}" if labels is not None else "") + "\n")
    _csv_with_header(out / f"mds_{_suffix(cfg)}.csv",
                     {**cfg.provenance(), "eigenvalues": vals.tolist()}, body)
    return {"eigenvalues": vals.tolist()}


COMMANDS = {
    "generate": cmd_generate, "dissim": cmd_dissim, "cluster": cmd_cluster,
    "select": cmd_select, "build": cmd_build, "evaluate": cmd_evaluate,
    "admissible": cmd_admissible, "compare": cmd_compare, "mds": cmd_mds,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="robdict", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON pipeline configuration")
    parser.add_argument("--out", help="output directory (overrides config 'out')")
    parser.add_argument("--seed", type=int, help="overrides both data and clustering seeds")
    parser.add_argument("--threads", type=int, default=None, help="BLAS thread limit")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("ROBDICT_THREADS") or args.threads
    try:
        cfg = load_config(args.config, args.seed, args.out)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        with threadpool_limits(int(threads) if threads else None):
            result = COMMANDS[args.command](cfg, out)
        log.info("%s: %s", args.command, json.dumps(result, default=str)[:500])
    except ConfigError as exc:
        print(f"robdict: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"robdict: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
