import json

import numpy as np
import pytest

from radialgan.cli import main
from radialgan.domains import MultiDomainSpec, gen_synthetic, load_csv
from radialgan.model import build_model, model_from_dict, HiddenConfig

SYNTH = {"kind": "multidomain", "num_domains": 3, "shared_dim": 6, "n": 400, "seed": 2}
TINY = {"encoder": [4], "decoder": [4], "discriminator": [4]}


def write(path, obj):
    path.write_text(json.dumps({"format_version": 1, **obj}))
    return str(path)


def run(tmp_path, command, cfg, out="out", *extra):
    return main([command, "--config", write(tmp_path / f"{command}.json", cfg), "--out", str(tmp_path / out), *extra])


def test_synth_writes_three_domains_and_round_trips(tmp_path):
    assert run(tmp_path, "synth", {"synth": SYNTH}) == 0
    out = tmp_path / "out"
    assert sorted(p.name for p in out.glob("*.csv")) == ["domain0.csv", "domain1.csv", "domain2.csv"]
    assert len(list(out.glob("*.schema.json"))) == 3
    mem = gen_synthetic(MultiDomainSpec(**{k: v for k, v in SYNTH.items() if k != "kind"}))
    for i, d in enumerate(mem):
        assert load_csv(out / f"domain{i}.csv", d.schema).equals(d)
    assert json.loads((out / "resolved_config.json").read_text())["synth"]["drop_fraction"] == 0.33


def test_synth_is_byte_deterministic_and_refuses_overwrite(tmp_path):
    assert run(tmp_path, "synth", {"synth": SYNTH}, "a") == 0
    assert run(tmp_path, "synth", {"synth": SYNTH}, "b") == 0
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
    assert run(tmp_path, "synth", {"synth": SYNTH}, "a") == 2
    assert run(tmp_path, "synth", {"synth": SYNTH}, "a", "--force") == 0


def test_seed_override_changes_output(tmp_path):
    run(tmp_path, "synth", {"synth": SYNTH}, "a")
    run(tmp_path, "synth", {"synth": SYNTH}, "b", "--seed", "9")
    assert (tmp_path / "a/domain0.csv").read_bytes() != (tmp_path / "b/domain0.csv").read_bytes()


def test_train_zero_iterations_is_fresh_model(tmp_path):
    cfg = {"data": {"synth": SYNTH}, "hidden": TINY, "train": {"iterations": 0}, "seed": 5}
    assert run(tmp_path, "train", cfg) == 0
    ckpt = json.loads((tmp_path / "out/model.json").read_text())
    loaded = model_from_dict(ckpt)
    fresh = build_model(loaded.schemas, None, None, HiddenConfig(**TINY), seed=5)
    for a, b in zip(loaded.encoders + loaded.decoders, fresh.encoders + fresh.decoders):
        assert all(np.array_equal(x.weight, y.weight) for x, y in zip(a.layers, b.layers))


def test_train_trace_rows_and_determinism(tmp_path):
    cfg = {"data": {"synth": SYNTH}, "hidden": TINY, "train": {"iterations": 7, "k_d": 8, "k_g": 8}}
    assert run(tmp_path, "train", cfg, "a") == 0
    assert run(tmp_path, "train", cfg, "b") == 0
    lines = (tmp_path / "a/trace.csv").read_text().splitlines()
    assert len(lines) - 1 == 7 * 3
    assert (tmp_path / "a/model.json").read_bytes() == (tmp_path / "b/model.json").read_bytes()


def test_translate_and_augment(tmp_path):
    run(tmp_path, "synth", {"synth": SYNTH}, "data")
    data = {"csv": [{"path": str(tmp_path / f"data/domain{i}.csv"),
                     "schema": str(tmp_path / f"data/domain{i}.schema.json")} for i in range(3)]}
    assert run(tmp_path, "train", {"data": data, "hidden": TINY, "train": {"iterations": 3, "k_d": 8, "k_g": 8}},
               "model") == 0
    model = str(tmp_path / "model/model.json")
    assert run(tmp_path, "translate", {"model": model, "source": 1, "target": 0,
                                      "input": str(tmp_path / "data/domain1.csv")}, "tr") == 0
    lines = (tmp_path / "tr/translated.csv").read_text().splitlines()
    assert len(lines) == 401
    header = (tmp_path / "data/domain0.csv").read_text().splitlines()[0]
    assert lines[0] == header

    assert run(tmp_path, "augment", {"model": model, "data": data, "target": 2, "translated_cap": 250}, "aug") == 0
    rows = (tmp_path / "aug/augmented.csv").read_text().splitlines()
    assert len(rows) - 1 == 400 + 250
    tags = (tmp_path / "aug/augmented_tags.csv").read_text().splitlines()[1:]
    assert sum(t.endswith(",original") for t in tags) == 400

    assert run(tmp_path, "augment", {"model": model, "data": data, "target": 2}, "aug2") == 0
    assert len((tmp_path / "aug2/augmented.csv").read_text().splitlines()) - 1 == 1200


def test_evaluate_target_only_zero_deltas(tmp_path):
    exp = {"synth": {**SYNTH, "n": 600}, "methods": ["target_only"], "repeats": 2, "predictor": {"max_epochs": 20}}
    assert run(tmp_path, "evaluate", {"experiment": exp}) == 0
    doc = json.loads((tmp_path / "out/report.json").read_text())
    assert all(c["delta_auc"] == 0.0 for c in doc["cells"])
    assert json.loads((tmp_path / "out/resolved_config.json").read_text())["experiment"]["folds"] == 1


def test_toy_gmm_sample_sizes(tmp_path):
    assert run(tmp_path, "toy", {"which": "gmm_samplesize", "iterations": 2}) == 0
    summary = json.loads((tmp_path / "out/summary.json").read_text())
    assert sorted({r["n"] for r in summary["runs"]}) == [300, 500, 1000]
    header = (tmp_path / "out/gmm_n300_gmm4_seed0.csv").read_text().splitlines()[0]
    assert header == "x1,x2,source_tag"


@pytest.mark.parametrize(
    "command,cfg,code",
    [
        ("synth", {"synth": {**SYNTH, "typo_field": 1}}, 2),
        ("synth", {"synth": {**SYNTH, "drop_fraction": 2.0}}, 3),
        ("translate", {"model": "/nonexistent.json", "source": 0, "target": 1, "input": "x.csv"}, 2),
        ("toy", {"which": "nope"}, 2),
    ],
)
def test_structured_errors_exit_nonzero(tmp_path, command, cfg, code):
    assert run(tmp_path, command, cfg) == code


def test_bad_config_files(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["synth", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    p.write_text(json.dumps({"format_version": 99, "synth": SYNTH}))
    assert main(["synth", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert main(["synth", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_code(tmp_path):
    run(tmp_path, "synth", {"synth": SYNTH}, "data")
    bad = tmp_path / "data/domain0.csv"
    text = bad.read_text().splitlines()
    text[1] = ",".join(["1e308"] * (len(text[1].split(",")) - 1) + ["0"])
    bad.write_text("\n".join(text) + "\n")
    data = {"csv": [{"path": str(tmp_path / f"data/domain{i}.csv")} for i in range(3)]}
    cfg = {"data": data, "hidden": TINY, "normalize": False, "train": {"iterations": 3, "k_d": 400, "k_g": 400}}
    assert run(tmp_path, "train", cfg) == 4
