"""Command-line entry point: ``radialgan {synth,train,translate,augment,evaluate,toy}``.

Every command reads a JSON config (with ``format_version``; unknown fields are
rejected), writes its artifacts into ``--out`` together with
``resolved_config.json`` (defaults filled in) and exits with 0 on success, 2 on
a config error, 3 on a data error and 4 on a numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import FORMAT_VERSION, from_dict, to_dict
from .domains import (
    Dataset,
    DomainSchema,
    MultiDomainSpec,
    Normalizer,
    fit_normalizer,
    gen_synthetic,
    load_csv,
    synth_spec_from_dict,
    write_csv,
)
from .errors import ConfigError, DataError, RadialGanError
from .evalkit.augment import build_augmented
from .evalkit.experiment import CsvDomain, ExperimentSpec, run_experiment
from .evalkit.toy import reproduce_toy
from .model import HiddenConfig, TrainConfig, build_model, model_from_dict, model_to_dict, train, translate


# ---------------------------------------------------------------- configs

@dataclass
class DataSource:
    csv: list[CsvDomain] | None = None
    synth: MultiDomainSpec | None = None

    def load(self) -> list[Dataset]:
        if (self.csv is None) == (self.synth is None):
            raise ConfigError("data: give exactly one of csv or synth")
        if self.synth is not None:
            return gen_synthetic(self.synth)
        out = []
        for dom in self.csv:
            schema = None if dom.schema is None else DomainSchema.from_dict(json.loads(Path(dom.schema).read_text()))
            out.append(load_csv(dom.path, schema))
        return out

    def paths(self) -> list[str]:
        if self.csv is None:
            return []
        return [p for d in self.csv for p in (d.path, d.schema) if p is not None]


@dataclass
class SynthConfig:
    synth: dict
    format_version: int = FORMAT_VERSION


@dataclass
class TrainCommandConfig:
    data: DataSource
    mode: str | None = None
    latent_dim: int | None = None
    hidden: HiddenConfig = field(default_factory=HiddenConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    normalize: bool = True  # min-max scale each domain; the scalers are stored in the checkpoint
    seed: int = 0
    format_version: int = FORMAT_VERSION


@dataclass
class TranslateConfig:
    model: str
    source: int
    target: int
    input: str
    format_version: int = FORMAT_VERSION
    seed: int = 0


@dataclass
class AugmentConfig:
    model: str
    data: DataSource
    target: int
    translated_cap: int | None = None
    seed: int = 0
    format_version: int = FORMAT_VERSION


@dataclass
class EvaluateConfig:
    experiment: ExperimentSpec
    format_version: int = FORMAT_VERSION


@dataclass
class ToyConfig:
    which: str
    seeds: list[int] = field(default_factory=lambda: [0])
    iterations: int | None = None
    format_version: int = FORMAT_VERSION


def _read_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if raw.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: format_version must be {FORMAT_VERSION}, got {raw.get('format_version')!r}")
    return raw


def _check_paths(paths) -> None:
    for p in paths:
        if not Path(p).exists():
            raise ConfigError(f"referenced path does not exist: {p}")


def _prepare_out(out: Path, names: list[str], force: bool) -> None:
    clash = [n for n in names if (out / n).exists()]
    if clash and not force:
        raise ConfigError(f"{out}: would overwrite {clash[0]} (use --force)")
    out.mkdir(parents=True, exist_ok=True)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands

def cmd_synth(raw: dict, out: Path, seed: int | None, force: bool) -> list[Path]:
    cfg = from_dict(SynthConfig, raw)
    spec_dict = dict(cfg.synth)
    if seed is not None:
        spec_dict["seed"] = seed
    spec = synth_spec_from_dict(spec_dict)
    data = gen_synthetic(spec)
    datasets = data if isinstance(data, list) else [data]
    stems = [d.schema.domain_id for d in datasets]
    names = [f"{s}.csv" for s in stems] + [f"{s}.schema.json" for s in stems] + ["resolved_config.json"]
    _prepare_out(out, names, force)
    for s, d in zip(stems, datasets):
        write_csv(out / f"{s}.csv", d)
        _write_json(out / f"{s}.schema.json", d.schema.to_dict())
    _write_json(out / "resolved_config.json", {"format_version": FORMAT_VERSION, "synth": to_dict(spec)})
    return [out / n for n in names]


def _normalizer_dict(nz: Normalizer) -> dict:
    return {"lo": nz.lo.tolist(), "hi": nz.hi.tolist(), "scaled": nz.scaled.tolist()}


def _normalizer_from(d: dict) -> Normalizer:
    return Normalizer(np.array(d["lo"], dtype=np.float64), np.array(d["hi"], dtype=np.float64),
                      np.array(d["scaled"], dtype=bool))


def cmd_train(raw: dict, out: Path, seed: int | None, force: bool) -> list[Path]:
    cfg = from_dict(TrainCommandConfig, raw)
    if seed is not None:
        cfg.seed = seed
    cfg.train.seed = cfg.seed
    _check_paths(cfg.data.paths())
    datasets = cfg.data.load()
    norms = [fit_normalizer(d) for d in datasets] if cfg.normalize else None
    if norms:
        datasets = [nz.apply_dataset(d) for nz, d in zip(norms, datasets)]
    names = ["model.json", "trace.csv", "resolved_config.json"]
    _prepare_out(out, names, force)
    model = build_model([d.schema for d in datasets], cfg.mode, cfg.latent_dim, cfg.hidden, seed=cfg.seed)
    model, trace = train(model, datasets, cfg.train)
    ckpt = model_to_dict(model, cfg.train)
    ckpt["normalizers"] = None if norms is None else [_normalizer_dict(nz) for nz in norms]
    _write_json(out / "model.json", ckpt)
    trace.to_csv(out / "trace.csv")
    _write_json(out / "resolved_config.json", to_dict(cfg))
    return [out / n for n in names]


def _load_checkpoint(path):
    _check_paths([path])
    try:
        ckpt = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid checkpoint JSON ({e})") from None
    norms = ckpt.get("normalizers")
    return model_from_dict(ckpt), None if norms is None else [_normalizer_from(n) for n in norms]


def cmd_translate(raw: dict, out: Path, seed: int | None, force: bool) -> list[Path]:
    cfg = from_dict(TranslateConfig, raw)
    if seed is not None:
        cfg.seed = seed
    model, norms = _load_checkpoint(cfg.model)
    for k in (cfg.source, cfg.target):
        if not 0 <= k < model.num_domains:
            raise ConfigError(f"no domain {k} in the model")
    _check_paths([cfg.input])
    data = load_csv(cfg.input, model.schemas[cfg.source])
    if norms:
        data = norms[cfg.source].apply_dataset(data)
    result = translate(model, cfg.source, cfg.target, data)
    if norms:
        result = norms[cfg.target].invert_dataset(result)
    names = ["translated.csv", "translated.schema.json", "resolved_config.json"]
    _prepare_out(out, names, force)
    write_csv(out / "translated.csv", result)
    _write_json(out / "translated.schema.json", result.schema.to_dict())
    _write_json(out / "resolved_config.json", to_dict(cfg))
    return [out / n for n in names]


def cmd_augment(raw: dict, out: Path, seed: int | None, force: bool) -> list[Path]:
    cfg = from_dict(AugmentConfig, raw)
    if seed is not None:
        cfg.seed = seed
    model, norms = _load_checkpoint(cfg.model)
    _check_paths(cfg.data.paths())
    datasets = cfg.data.load()
    if len(datasets) != model.num_domains:
        raise DataError(f"{len(datasets)} datasets for a {model.num_domains}-domain model")
    if not 0 <= cfg.target < model.num_domains:
        raise ConfigError(f"no domain {cfg.target} in the model")
    if norms:
        datasets = [nz.apply_dataset(d) for nz, d in zip(norms, datasets)]
    aug = build_augmented(model, datasets, cfg.target, cfg.translated_cap, seed=cfg.seed)
    x = aug.x if not norms else norms[cfg.target].invert(aug.x)
    schema = model.schemas[cfg.target]
    if not np.all(aug.y == np.round(aug.y)):
        schema = DomainSchema(schema.domain_id, schema.features, "continuous", None)
    names = ["augmented.csv", "augmented_tags.csv", "augmented.schema.json", "resolved_config.json"]
    _prepare_out(out, names, force)
    write_csv(out / "augmented.csv", Dataset(schema, x, aug.y))
    with open(out / "augmented_tags.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "source", "source_id", "tag"])
        for k in range(aug.n):
            w.writerow([k, int(aug.source[k]), int(aug.source_ids[k]), aug.tag(k)])
    _write_json(out / "augmented.schema.json", schema.to_dict())
    _write_json(out / "resolved_config.json", to_dict(cfg))
    return [out / n for n in names]


def cmd_evaluate(raw: dict, out: Path, seed: int | None, force: bool, jobs: int = 1) -> list[Path]:
    cfg = from_dict(EvaluateConfig, raw)
    if seed is not None:
        cfg.experiment.seed = seed
    if cfg.experiment.csv:
        _check_paths([p for d in cfg.experiment.csv for p in (d.path, d.schema) if p is not None])
    names = ["report.json", "report.csv", "resolved_config.json"]
    _prepare_out(out, names, force)
    report = run_experiment(cfg.experiment, jobs=jobs)
    report.write(out)
    _write_json(out / "resolved_config.json", to_dict(cfg))
    return [out / n for n in names]


def cmd_toy(raw: dict, out: Path, seed: int | None, force: bool) -> list[Path]:
    cfg = from_dict(ToyConfig, raw)
    if seed is not None:
        cfg.seeds = [seed]
    if cfg.which not in ("shift_capacity", "gmm_samplesize"):
        raise ConfigError(f"unknown toy experiment {cfg.which!r}")
    _prepare_out(out, ["summary.json", "resolved_config.json"], force)
    reproduce_toy(cfg.which, out, cfg.seeds, cfg.iterations)
    _write_json(out / "resolved_config.json", to_dict(cfg))
    return sorted(out.iterdir())


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "translate": cmd_translate,
    "augment": cmd_augment,
    "evaluate": cmd_evaluate,
    "toy": cmd_toy,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radialgan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, default=None, help="override the config's global seed")
        s.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if name == "evaluate":
            s.add_argument("--jobs", type=int, default=1, help="worker processes for experiment units")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = _read_config(args.config)
        kw = {"jobs": args.jobs} if args.command == "evaluate" else {}
        COMMANDS[args.command](raw, Path(args.out), args.seed, args.force, **kw)
    except RadialGanError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
