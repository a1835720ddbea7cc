import json
import os
import pathlib

import pytest

import slicesim

REPO = pathlib.Path(os.environ.get("SLICESIM_REPO", pathlib.Path(__file__).resolve().parents[2]))
CHECKPOINT = REPO / "checkpoints" / "reference.json"


def test_default_config_round_trips():
    cfg = slicesim.default_config()
    assert cfg == json.loads((REPO / "configs" / "default.json").read_text())
    assert slicesim.config_hash(json.dumps(cfg)) == slicesim.config_hash()


def test_bad_config_raises():
    cfg = slicesim.default_config()
    cfg["train"]["gamma"] = 2.0
    with pytest.raises(ValueError):
        slicesim.config_hash(json.dumps(cfg))


def test_gini():
    assert slicesim.gini([1.0, 1.0, 1.0]) == pytest.approx(0.0, abs=1e-12)
    assert slicesim.gini([0.0, 0.0, 3.0]) == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_env_is_deterministic():
    shares = [[0.25, 0.30, 0.35], [0.45, 0.50, 0.35], [0.20, 0.15, 0.20]]
    runs = []
    for _ in range(2):
        env = slicesim.SliceEnv(seed=7)
        runs.append([env.step(shares) for _ in range(5)] + [env.state()])
        assert env.tick == 5
    assert runs[0] == runs[1]
    urllc = runs[0][0][0]
    assert urllc["latency_ms"] > 0
    assert 0.0 <= urllc["reliability"] <= 1.0


def test_cli_validate_config():
    rc, out, err = slicesim.main(["validate-config", "--config", str(REPO / "configs" / "default.json")])
    assert rc == 0, err
    rc, _, err = slicesim.main(["validate-config", "--config", "missing.json"])
    assert rc == 1
    assert "missing.json" in err


@pytest.mark.skipif(not CHECKPOINT.exists(), reason="reference checkpoint not shipped")
def test_case_study_without_spike_has_no_detection():
    report = slicesim.case_study(CHECKPOINT, seed=3, spike=False)
    assert report["verdict"] in ("PASSED", "FAILED")
    assert report["detection_tick"] is None
