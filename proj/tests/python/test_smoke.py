import json
import math
import os
from pathlib import Path

import pytest

import fmprog

SOURCE_DIR = Path(os.environ.get("FMPROG_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def test_parse_canonical():
    info = fmprog.parse(fmprog.canonical_program)
    assert info["num_sites"] == 3
    assert info["call_sites"] == ["find", "find", "vqa"]
    assert info["diagnostics"] == []
    assert fmprog.parse(info["source"])["source"] == info["source"]


def test_parse_rejects_unknown_function():
    with pytest.raises(ValueError, match="unknown function"):
        fmprog.parse('program p(x):\n  return foo(x, "a")\n')


def test_reward_decomposition():
    costs = [0.01, 0.01, 1.0]
    parts = fmprog.sub_rewards(costs, 1.0, 0.3)
    assert math.isclose(sum(parts), fmprog.reward(1.0, sum(costs), 0.3), abs_tol=1e-12)


def test_softmax_and_sigma():
    p = fmprog.softmax([1.0, 2.0, 3.0])
    assert math.isclose(sum(p), 1.0)
    assert p[2] > p[1] > p[0]
    assert math.isclose(fmprog.uncertainty_sigma([3.0, 4.0], [1.0, 1.0]), 5.0)


def test_pareto_front():
    front = fmprog.pareto_front([(1.0, 0.5), (2.0, 0.4), (0.5, 0.5), (3.0, 0.9)])
    assert front == [(0.5, 0.5), (3.0, 0.9)]


def test_run_canonical_is_deterministic():
    a = fmprog.run_canonical(seed=2, horizon=200)
    b = fmprog.run_canonical(seed=2, horizon=200)
    assert a["rewards"] == b["rewards"]
    cheap = fmprog.run_canonical(seed=2, horizon=200, policy="cheapest")
    assert 0.02 <= cheap["mean_cost"] <= 0.07


def test_run_config(tmp_path):
    doc = json.loads((SOURCE_DIR / "configs" / "canonical.json").read_text())
    doc["horizon"] = 100
    doc["baselines"] = ["cheapest"]
    normalized = json.loads(fmprog.normalize_config(json.dumps(doc), str(SOURCE_DIR / "configs")))
    assert normalized["horizon"] == 100
    (tmp_path / "canonical.fmp").write_text((SOURCE_DIR / "configs" / "canonical.fmp").read_text())
    (tmp_path / "config.json").write_text(json.dumps(doc))
    root = Path(fmprog.run_config(str(tmp_path / "config.json"), str(tmp_path / "out")))
    assert (root / "pareto.csv").exists()
    assert len(list(root.rglob("episodes.jsonl"))) == 2
