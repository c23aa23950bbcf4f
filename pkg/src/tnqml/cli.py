"""Command-line interface: ``tnqml {train,eval,sample,resources,init}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from itertools import combinations
from pathlib import Path

import numpy as np

from . import dataio, encoding, mps, resources, training, tree
from .noise import NoiseSpec, noise_from_config

log = logging.getLogger("tnqml")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
IMAGE_SIDE = encoding.TARGET_SIZE


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


@dataclass
class RunConfig:
    architecture: str = "tree"
    V: int = 1
    width: int = IMAGE_SIDE
    height: int = IMAGE_SIDE
    pairs: list = field(default_factory=lambda: [[0, 7]])
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0
    noise: dict | None = None
    data_dir: str = "data/mnist"
    out_dir: str = "runs"
    validation_fraction: float = 0.1
    threads: int = 1

    @classmethod
    def from_dict(cls, obj: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)

    def validate(self) -> tuple[training.Hyperparams, NoiseSpec | None]:
        if self.architecture not in ("tree", "mps"):
            raise ConfigError(f"architecture: expected 'tree' or 'mps', got {self.architecture!r}")
        if (self.width, self.height) != (IMAGE_SIDE, IMAGE_SIDE):
            raise ConfigError(f"width/height: MNIST inputs are downscaled to {IMAGE_SIDE}x{IMAGE_SIDE}")
        try:
            self.topology()
        except ValueError as exc:
            raise ConfigError(f"V: {exc}") from exc
        if not self.pairs:
            raise ConfigError("pairs: at least one digit pair is required")
        for pair in self.pairs:
            if len(pair) != 2 or pair[0] == pair[1] or not all(0 <= d <= 9 for d in pair):
                raise ConfigError(f"pairs: invalid digit pair {pair}")
        if self.threads < 1:
            raise ConfigError("threads: must be >= 1")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigError("validation_fraction: must lie in [0, 1)")
        try:
            hp = training.Hyperparams(**self.hyperparams)
        except TypeError as exc:
            raise ConfigError(f"hyperparams: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"hyperparams: {exc}") from exc
        try:
            noise = noise_from_config(self.noise)
        except ValueError as exc:
            raise ConfigError(f"noise: {exc}") from exc
        return hp, noise

    def topology(self):
        if self.architecture == "tree":
            return tree.build_tree_topology(self.width, self.height, self.V)
        return mps.build_mps_topology(self.width * self.height, self.V)


def _noise_from_args(args) -> dict | None:
    probs = {k: v for k, v in (("p_a", args.noise_pa), ("p_d", args.noise_pd)) if v is not None}
    times = {k: v for k, v in (("T_g", args.tg), ("T_1", args.t1), ("T_2", args.t2)) if v is not None}
    if probs and times:
        raise ConfigError("noise: give --noise-pa/--noise-pd or --tg/--t1/--t2, not both")
    return probs or times or None


def _load_split(data_dir: str, split: str) -> dataio.Dataset:
    try:
        return dataio.load_mnist(data_dir, split)
    except (FileNotFoundError, dataio.IdxFormatError) as exc:
        raise DataError(f"data: {exc}") from exc


def _encode(ds: dataio.Dataset) -> np.ndarray:
    return encoding.encode_images(ds.images)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def train_pair(cfg: RunConfig, hp, noise, pair, train_ds, test_ds, out_dir: Path) -> list[dict]:
    a, b = sorted(pair)
    task = dataio.make_pair_task(train_ds, a, b, cfg.validation_fraction, cfg.seed, test=test_ds)
    topo = cfg.topology()
    validation = (_encode(task.validation), task.validation.labels) if len(task.validation) else None
    result = training.train(
        topo,
        _encode(task.train),
        task.train.labels,
        hp,
        cfg.seed,
        noise=noise,
        validation=validation,
        test=(_encode(task.test), task.test.labels),
        threads=cfg.threads,
        log=lambda m: log.info("pair %d-%d epoch %d: loss %.4g test %.4f", a, b, m.epoch, m.train_loss, m.test_accuracy),
    )
    noise_d = noise.to_dict() if noise else {"p_a": 0.0, "p_d": 0.0}
    rows = []
    for m in result.history:
        rows.append(
            {
                "pair_a": a,
                "pair_b": b,
                "seed": cfg.seed,
                "architecture": cfg.architecture,
                **noise_d,
                "epoch": m.epoch,
                "train_loss": m.train_loss,
                "validation_accuracy": m.validation_accuracy,
                "test_accuracy": m.test_accuracy,
            }
        )
    run_meta = {
        "pair": [a, b],
        "seed": cfg.seed,
        "architecture": cfg.architecture,
        "V": cfg.V,
        "hyperparams": hp.to_dict(),
        "init_distribution": result.init_distribution,
        "noise": noise.to_dict() if noise else None,
        "validation_fraction": cfg.validation_fraction,
        "train_size": len(task.train),
        "validation_size": len(task.validation),
        "test_size": len(task.test),
        "metrics": [dict(r) for r in rows],
    }
    pair_dir = out_dir / f"pair_{a}_{b}_seed{cfg.seed}"
    pair_dir.mkdir(parents=True, exist_ok=True)
    meta = {k: run_meta[k] for k in ("pair", "seed", "validation_fraction", "noise", "hyperparams", "init_distribution")}
    dataio.save_model(pair_dir / "model.json", dataio.ModelDocument(topo, result.params, "discriminative", meta))
    _write_json(pair_dir / "run.json", run_meta)
    dataio.write_results(rows, pair_dir / "metrics.csv")
    final = dict(rows[-1], epoch="final")
    return [final]


def cmd_train(args) -> int:
    cfg_obj = {}
    if args.config:
        try:
            cfg_obj = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
    for key, value in (
        ("architecture", args.arch),
        ("V", args.V),
        ("seed", args.seed),
        ("data_dir", args.data_dir),
        ("out_dir", args.out_dir),
        ("threads", args.threads),
    ):
        if value is not None:
            cfg_obj[key] = value
    if args.all_pairs:
        cfg_obj["pairs"] = [list(p) for p in combinations(range(10), 2)]
    elif args.pair:
        cfg_obj["pairs"] = [list(p) for p in args.pair]
    if args.epochs is not None:
        cfg_obj.setdefault("hyperparams", {})["epochs"] = args.epochs
    cli_noise = _noise_from_args(args)
    if cli_noise is not None:
        cfg_obj["noise"] = cli_noise
    cfg = RunConfig.from_dict(cfg_obj)
    hp, noise = cfg.validate()
    train_ds = _load_split(cfg.data_dir, "train")
    test_ds = _load_split(cfg.data_dir, "test")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    finals = []
    for pair in cfg.pairs:
        finals.extend(train_pair(cfg, hp, noise, pair, train_ds, test_ds, out_dir))
        print(f"pair {finals[-1]['pair_a']}-{finals[-1]['pair_b']}: final test accuracy {finals[-1]['test_accuracy']:.4f}")
    dataio.write_results(finals, out_dir / "results.csv")
    if len(finals) > 1:
        mean = float(np.mean([r["test_accuracy"] for r in finals]))
        print(f"mean final test accuracy over {len(finals)} pairs: {mean:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _load_model(path) -> dataio.ModelDocument:
    try:
        return dataio.load_model(path)
    except (OSError, dataio.ModelFormatError) as exc:
        raise DataError(f"model: {exc}") from exc


def cmd_eval(args) -> int:
    doc = _load_model(args.model)
    if doc.mode != "discriminative":
        raise DataError("model: eval needs a discriminative model")
    base = _noise_from_args(args)
    if args.t1_sweep is not None and base is not None and set(base) == {"T_g"}:
        base = None  # --tg only sets the gate time of the sweep
    noise = noise_from_config(base)
    pair = args.pair[0] if args.pair else doc.metadata.get("pair")
    if pair is None:
        raise ConfigError("pair: not stored in the model, pass --pair")
    if doc.topology.n_inputs != IMAGE_SIDE * IMAGE_SIDE:
        raise DataError(f"model expects {doc.topology.n_inputs} inputs, data has {IMAGE_SIDE**2}")
    a, b = sorted(pair)
    train_ds = _load_split(args.data_dir, "train")
    test_ds = _load_split(args.data_dir, "test")
    task = dataio.make_pair_task(
        train_ds, a, b, doc.metadata.get("validation_fraction", 0.1), doc.metadata.get("seed", 0), test=test_ds
    )
    enc, labels = _encode(task.test), task.test.labels
    acc = training.test_accuracy(doc.topology, doc.params, enc, labels, noise, args.threads)
    report = {"pair": [a, b], "noise": noise.to_dict() if noise else None, "test_accuracy": acc}
    if args.shots is not None:
        success = training.success_probabilities(doc.topology, doc.params, enc, labels, noise, args.threads)
        report["majority_vote_shots"] = args.shots
        report["majority_vote_accuracy"] = float(
            np.mean([training.majority_vote_success(float(np.clip(p, 0, 1)), args.shots) for p in success])
        )
    print(f"test accuracy {acc:.4f}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "eval.json", report)
    if args.t1_sweep is not None:
        lo, hi, steps = float(args.t1_sweep[0]), float(args.t1_sweep[1]), int(args.t1_sweep[2])
        if not (0 < lo <= hi and steps >= 1):
            raise ConfigError("t1-sweep: need 0 < lo <= hi and steps >= 1")
        t_g = args.tg if args.tg is not None else 0.2
        write_t1_sweep(doc, enc, labels, lo, hi, steps, t_g, args.threads, out_dir)
    return EXIT_OK


T2_OVER_T1 = 7.0 / 5.0


def write_t1_sweep(doc, enc, labels, lo, hi, steps, t_g, threads, out_dir: Path) -> None:
    """Per-example success probability over a geometric grid of ``T_1``."""
    t1_values = np.geomspace(lo, hi, steps)
    summary, detail = [], []
    for t1 in t1_values:
        t2 = T2_OVER_T1 * t1
        spec = NoiseSpec.from_times(t_g, t1, t2)
        success = training.success_probabilities(doc.topology, doc.params, enc, labels, spec, threads)
        summary.append(
            [repr(float(t1)), repr(float(t2)), repr(float(t_g)), repr(spec.p_a), repr(spec.p_d),
             repr(float(np.mean(success > 0.5))), repr(float(np.mean(success)))]
        )
        detail.extend([repr(float(t1)), str(i), repr(float(p))] for i, p in enumerate(success))
    with open(out_dir / "t1_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t1", "t2", "tg", "p_a", "p_d", "test_accuracy", "mean_success_probability"])
        w.writerows(summary)
    with open(out_dir / "t1_sweep_examples.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t1", "example", "success_probability"])
        w.writerows(detail)


# ---------------------------------------------------------------------------
# sample / init / resources
# ---------------------------------------------------------------------------


def cmd_sample(args) -> int:
    doc = _load_model(args.model)
    if doc.mode != "generative":
        raise ConfigError("model: sampling needs a generative model")
    if args.count < 0:
        raise ConfigError("count: must be >= 0")
    if doc.topology.kind == "tree":
        bits = tree.sample_generative_tree(doc.topology, doc.params, args.seed, shots=args.count)
    else:
        bits = mps.sample_generative_mps(doc.topology, doc.params, args.seed, shots=args.count)
    Path(args.out).write_text("".join("".join(map(str, row)) + "\n" for row in bits))
    return EXIT_OK


def _topology_from_args(args, mode: str):
    try:
        if args.arch == "tree":
            width = args.width if args.width is not None else args.n
            height = args.height if args.height is not None else 1
            if width is None:
                raise ConfigError("tree: give --n or --width/--height")
            return tree.build_tree_topology(width, height, args.V)
        if args.n is None:
            raise ConfigError("mps: --n is required")
        return mps.build_mps_topology(args.n, args.V, mode)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"topology: {exc}") from exc


def cmd_init(args) -> int:
    topo = _topology_from_args(args, args.mode)
    if args.identity:
        params = tree.identity_params(topo)
    else:
        params = np.random.default_rng(args.seed).standard_normal(tree.parameter_count(topo))
    meta = {"init": "identity" if args.identity else training.INIT_DISTRIBUTION, "seed": args.seed}
    dataio.save_model(args.out, dataio.ModelDocument(topo, params, args.mode, meta))
    return EXIT_OK


def cmd_resources(args) -> int:
    try:
        if args.arch == "tree":
            if args.n is None:
                raise ConfigError("tree: --n is required")
            q = resources.tree_qubit_count(args.n, args.V)
            topo = tree.build_tree_topology(args.n, 1, args.V)
            schedule = resources.schedule_tree(topo, args.mode)
        else:
            if args.n is None:
                raise ConfigError("mps: --n is required")
            q = resources.mps_qubit_count(args.V)
            topo = mps.build_mps_topology(args.n, args.V, args.mode)
            schedule = resources.schedule_mps(topo)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"resources: {exc}") from exc
    if schedule.peak_live != q:
        raise FloatingPointError(f"schedule peaks at {schedule.peak_live} qubits, expected {q}")
    print(q)
    if args.out:
        Path(args.out).write_text(schedule.to_text())
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_noise_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--noise-pa", type=float, help="amplitude-damping probability")
    p.add_argument("--noise-pd", type=float, help="dephasing probability")
    p.add_argument("--tg", type=float, help="gate time (same unit as --t1/--t2, e.g. microseconds)")
    p.add_argument("--t1", type=float, help="relaxation time")
    p.add_argument("--t2", type=float, help="dephasing time")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tnqml", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train pairwise MNIST classifiers")
    p.add_argument("--config")
    p.add_argument("--pair", nargs=2, type=int, action="append", metavar=("A", "B"))
    p.add_argument("--all-pairs", action="store_true", help="train all 45 digit pairs")
    p.add_argument("--arch", choices=("tree", "mps"))
    p.add_argument("--V", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--data-dir")
    p.add_argument("--out-dir")
    p.add_argument("--threads", type=int)
    _add_noise_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on its test split")
    p.add_argument("model")
    p.add_argument("--pair", nargs=2, type=int, action="append", metavar=("A", "B"))
    p.add_argument("--data-dir", default="data/mnist")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--shots", type=int, help="also report majority-vote accuracy over this many shots")
    p.add_argument("--t1-sweep", nargs=3, metavar=("LO", "HI", "STEPS"))
    _add_noise_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="draw bitstrings from a generative model")
    p.add_argument("model")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    for name, func, helptext in (
        ("resources", cmd_resources, "qubit count and measure/reset schedule"),
        ("init", cmd_init, "write a random or identity model"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--arch", choices=("tree", "mps"), default="tree")
        p.add_argument("--n", type=int)
        p.add_argument("--V", type=int, default=1)
        p.add_argument("--mode", choices=("discriminative", "generative"), default="discriminative")
        p.add_argument("--out", required=(name == "init"))
        if name == "init":
            p.add_argument("--width", type=int)
            p.add_argument("--height", type=int)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--identity", action="store_true")
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, dataio.ModelFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
