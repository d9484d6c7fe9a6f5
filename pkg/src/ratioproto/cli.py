"""Command-line entry point: ``ratioproto <command> [--config PATH] [--out DIR] [--seed N]``.

Exit codes: 0 success, 1 self-check failure, 2 configuration error,
3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import Dataset, SyntheticConfig, generate_synthetic, load_csv, save_csv
from .diagnostics import compare_runs, write_comparison_csv
from .episodes import TrainConfig, evaluate, read_train_log, train, write_train_log
from .exceptions import ConfigError, NumericalError
from .heads import Head, HeadKind, cross_entropy, dr_confidences, softmax_confidences
from .net import load_params, save_params
from .surface import (
    EQUILATERAL,
    RGB_AXES,
    find_extrema,
    plane_grid,
    sphere_grid,
    write_grid_csv,
    write_pgm,
)

log = logging.getLogger("ratioproto")

EXIT_SELF_CHECK = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

# Toy two-class example: query of class c1 at distances (1, 2), then scaled by 2.
TABLE1_CASES = {"a": (1.0, 2.0), "b": (2.0, 4.0)}
TABLE1_EXPECTED = {
    "a": {"sigma_c1": 0.95257, "delta_c1": 0.80000, "L_S": 0.048587, "L_DR": 0.22314},
    "b": {"sigma_c1": 0.99999, "delta_c1": 0.80000, "L_S": 6.1442e-6, "L_DR": 0.22314},
}
TABLE1_RTOL = 1e-4


def table1_values() -> dict:
    rows = {}
    for case, d in TABLE1_CASES.items():
        sigma = softmax_confidences(d, class_order=("c1", "c2"))
        delta = dr_confidences(d, rho=2.0, class_order=("c1", "c2"))
        rows[case] = {
            "d_c1": d[0],
            "d_c2": d[1],
            "sigma_c1": sigma["c1"],
            "delta_c1": delta["c1"],
            "L_S": cross_entropy(sigma, "c1"),
            "L_DR": cross_entropy(delta, "c1"),
        }
    return rows


def table1_check(rows: dict) -> list[str]:
    """Names of entries that miss the reference values by more than 1e-4 relative."""
    failures = []
    for case, expected in TABLE1_EXPECTED.items():
        for key, target in expected.items():
            if abs(rows[case][key] - target) > TABLE1_RTOL * abs(target):
                failures.append(f"{key}({case})")
    return failures


def format_table1(rows: dict) -> str:
    lines = [f"{'case':<6}{'d_c1':>6}{'d_c2':>6}{'sigma_c1':>12}{'delta_c1':>12}{'L_S':>14}{'L_DR':>12}"]
    for case, r in rows.items():
        lines.append(
            f"{case:<6}{r['d_c1']:>6g}{r['d_c2']:>6g}{r['sigma_c1']:>12.5f}{r['delta_c1']:>12.5f}"
            f"{r['L_S']:>14.5g}{r['L_DR']:>12.5f}"
        )
    return "\n".join(lines)


# -- configuration -------------------------------------------------------------


@dataclass
class RunConfig:
    seed: int = 0
    synthetic: SyntheticConfig | None = field(default_factory=SyntheticConfig)
    csv_path: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_split: str = "test"
    eval_episodes: int = 600

    @classmethod
    def from_dict(cls, raw: dict, seed: int | None = None) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw = dict(raw)
        run_seed = int(raw.get("seed", 0) if seed is None else seed)
        ds = raw.get("dataset", {"synthetic": {}})
        synthetic, csv_path = None, None
        if "csv" in ds:
            csv_path = str(ds["csv"])
        else:
            syn = dict(ds.get("synthetic", {}))
            if "split_fractions" in syn:
                syn["split_fractions"] = tuple(syn["split_fractions"])
            try:
                synthetic = SyntheticConfig(**syn)
            except TypeError as exc:
                raise ConfigError(f"bad synthetic dataset config: {exc}") from exc
            synthetic.validate()
        proto = raw.get("protocol", {})
        head = raw.get("head", {"kind": "DR"})
        head_kind = head["kind"] if isinstance(head, dict) else head
        allowed = {"n_way", "k_shot", "n_query", "episodes", "val_episodes"}
        unknown = set(proto) - allowed
        if unknown:
            raise ConfigError(f"unknown protocol keys {sorted(unknown)}")
        try:
            tc = TrainConfig(
                **{k: int(v) for k, v in proto.items()},
                lr=float(raw.get("lr", 1e-3)),
                head=HeadKind.parse(head_kind).value,
                mode=raw.get("mode", "prototype"),
                seed=run_seed,
                hidden=tuple(int(h) for h in raw.get("hidden", (64, 32))),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        tc.validate()
        ev = raw.get("evaluate", {})
        return cls(
            seed=run_seed,
            synthetic=synthetic,
            csv_path=csv_path,
            train=tc,
            eval_split=ev.get("split", "test"),
            eval_episodes=int(ev.get("n_episodes", 600)),
        )

    def to_dict(self) -> dict:
        t = self.train
        return {
            "seed": self.seed,
            "dataset": {"csv": self.csv_path} if self.csv_path else {"synthetic": self.synthetic.to_dict()},
            "protocol": {
                "n_way": t.n_way,
                "k_shot": t.k_shot,
                "n_query": t.n_query,
                "episodes": t.episodes,
                "val_episodes": t.val_episodes,
            },
            "head": {"kind": t.head},
            "mode": t.mode,
            "lr": t.lr,
            "hidden": list(t.hidden),
            "evaluate": {"split": self.eval_split, "n_episodes": self.eval_episodes},
        }

    def load_dataset(self) -> Dataset:
        if self.csv_path:
            return load_csv(self.csv_path)
        return generate_synthetic(self.synthetic, self.seed)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _load_run_config(args) -> RunConfig:
    raw = _read_json(args.config) if args.config else {}
    return RunConfig.from_dict(raw, seed=args.seed)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, config: dict, outputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    (out / f"manifest_{command}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


# -- commands --------------------------------------------------------------------


def cmd_reproduce_table1(args) -> int:
    rows = table1_values()
    print(format_table1(rows))
    failures = table1_check(rows)
    if failures:
        print("MISMATCH: " + ", ".join(failures))
        return EXIT_SELF_CHECK
    print("all values within 1e-4 relative of the reference values")
    return 0


def cmd_gen_data(args) -> int:
    cfg = _load_run_config(args)
    if cfg.synthetic is None:
        raise ConfigError("gen-data needs a synthetic dataset config")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "dataset.csv"
    save_csv(cfg.load_dataset(), path)
    _write_manifest(out, "gen-data", cfg.to_dict(), [path])
    print(path)
    return 0


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    dataset = cfg.load_dataset()
    cfg.train.validate(dataset)
    tlog = train(dataset, cfg.train)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log.info("writing run artifacts to %s", out)
    log_csv, sidecar, model = out / "trainlog.csv", out / "trainlog.npz", out / "model"
    write_train_log(tlog, log_csv, sidecar)
    head = cfg.train.head_obj
    save_params(tlog.best_params, model, head, {"mode": cfg.train.mode, "best_episode": tlog.best_episode if tlog.checkpoints else None})
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    _write_manifest(out, "train", cfg.to_dict(), [log_csv, model.with_suffix(".bin"), model.with_suffix(".json")])
    if tlog.checkpoints:
        last = tlog.checkpoints[-1]
        print(f"{len(tlog.checkpoints)} checkpoints; final val_acc={last.val_acc:.4f}; best at episode {tlog.best_episode}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_run_config(args)
    model_path = Path(args.model) if args.model else Path(args.out) / "model"
    params, meta = load_params(model_path)
    t = cfg.train
    head = Head(HeadKind.parse(meta.get("head") or t.head), log_rho=params.log_rho if params.log_rho is not None else 2.0)
    mean, half = evaluate(
        params, cfg.load_dataset(), cfg.eval_split,
        n_way=t.n_way, k_shot=t.k_shot, n_query=t.n_query,
        n_episodes=cfg.eval_episodes, seed=cfg.seed, head=head, mode=meta.get("mode", t.mode),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = {"split": cfg.eval_split, "n_episodes": cfg.eval_episodes, "accuracy": mean, "ci95_half_width": half}
    (out / "evaluation.json").write_text(json.dumps(result, indent=2))
    print(f"accuracy {mean:.4f} +- {half:.4f} over {cfg.eval_episodes} episodes")
    return 0


def _resolve_log(path) -> Path:
    p = Path(path)
    return p / "trainlog.csv" if p.is_dir() else p


def cmd_diagnose(args) -> int:
    log_a = read_train_log(_resolve_log(args.log_a))
    log_b = read_train_log(_resolve_log(args.log_b))
    try:
        rows = compare_runs(log_a, log_b, fixed_prototypes=args.fixed_prototypes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "comparison.csv"
    write_comparison_csv(rows, path)
    for r in rows:
        print(f"{r.measure:<11} A={r.geomean_a:.5f} B={r.geomean_b:.5f} mw_p={r.mw_p:.4g} fisher_p={'' if r.fisher_p is None else f'{r.fisher_p:.4g}'} favors={r.favors}")
    return 0


DEFAULT_SURFACE = {"domain": "sphere", "head": {"kind": "AngDR", "log_rho": math.log(2.0)}, "resolution": 91, "refine_steps": 60}
CLASS_NAMES = ("red", "green", "blue")


def _surface_config(raw: dict) -> dict:
    cfg = {**DEFAULT_SURFACE, **raw}
    if cfg["domain"] not in ("plane", "sphere"):
        raise ConfigError("domain must be 'plane' or 'sphere'")
    h = cfg["head"] if isinstance(cfg["head"], dict) else {"kind": cfg["head"]}
    try:
        cfg["head"] = Head(
            HeadKind.parse(h.get("kind", "AngDR")),
            log_rho=float(h.get("log_rho", math.log(h.get("rho", 2.0)))),
            scale=float(h.get("scale", 2.0)),
            margin=float(h.get("margin", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["domain"] == "plane" and "resolution" not in raw:
        cfg["resolution"] = 201
    return cfg


def cmd_surface(args) -> int:
    raw = _read_json(args.config) if args.config else {}
    cfg = _surface_config(raw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    head, res = cfg["head"], int(cfg["resolution"])
    report, outputs = {}, []
    try:
        for target, name in enumerate(CLASS_NAMES):
            if cfg["domain"] == "plane":
                grid = plane_grid(cfg.get("prototypes", EQUILATERAL), head, target, cfg.get("bounds"), res)
            else:
                grid = sphere_grid(cfg.get("class_vectors", RGB_AXES), head, target, res)
            ext = find_extrema(grid, int(cfg["refine_steps"]))
            csv_path, pgm_path = out / f"surface_{name}.csv", out / f"surface_{name}.pgm"
            write_grid_csv(grid, csv_path)
            write_pgm(grid, pgm_path)
            outputs += [csv_path, pgm_path]
            report[name] = {
                "argmax": [float(v) for v in ext.argmax],
                "max_value": ext.max_value,
                "argmins": [[float(v) for v in m] for m in ext.argmins],
                "min_value": ext.min_value,
                "flat": ext.flat,
            }
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ext_path = out / "extrema.json"
    ext_path.write_text(json.dumps(report, indent=2))
    outputs.append(ext_path)
    _write_manifest(out, "surface", {**raw, "head": {"kind": head.kind.value, "log_rho": head.log_rho, "scale": head.scale, "margin": head.margin}}, outputs)
    r = report["red"]
    print(f"red: max {r['max_value']:.6f} at {np.round(r['argmax'], 4).tolist()}; min {r['min_value']:.6g} at {[np.round(m, 4).tolist() for m in r['argmins']]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ratioproto", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("reproduce-table1", help="print and self-check the two-distance toy table")
    p.set_defaults(func=cmd_reproduce_table1)
    p = sub.add_parser("gen-data", help="write a synthetic dataset CSV")
    common(p)
    p.set_defaults(func=cmd_gen_data)
    p = sub.add_parser("train", help="episodic training run")
    common(p)
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("evaluate", help="few-shot accuracy with a 95% interval")
    common(p)
    p.add_argument("--model", help="model path prefix (default: <out>/model)")
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("diagnose", help="compare two training logs")
    p.add_argument("log_a", help="run directory or trainlog.csv")
    p.add_argument("log_b", help="run directory or trainlog.csv")
    p.add_argument("--fixed-prototypes", action="store_true", help="hold prototypes at pre-update positions")
    common(p, config=False)
    p.set_defaults(func=cmd_diagnose)
    p = sub.add_parser("surface", help="confidence surfaces and their extrema")
    common(p)
    p.set_defaults(func=cmd_surface)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
