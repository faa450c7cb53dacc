import csv
import json
from pathlib import Path

import pytest

from covercert import cli, config
from covercert.errors import ConfigError, ValidationFailure

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

FAST = [
    ("divergences", "divergences.toml", None),
    ("spectral", "spectral.toml", None),
    ("covering-iid", "covering_iid.toml", 100),
    ("covering-iid", "covering_iid_bipartite.toml", 100),
    ("covering-expander", "covering_expander.toml", 100),
    ("excision-verify", "excision.toml", None),
    ("bounds", "bounds.toml", None),
    ("rates", "rates_wiretap.toml", None),
    ("rates", "rates_qmac.toml", None),
]


def read_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "# covercert-schema=1"
    return list(csv.DictReader(lines[1:]))


@pytest.mark.parametrize("sub,name,trials", FAST)
def test_runs_are_byte_identical(tmp_path, sub, name, trials):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert cli.main([sub, "--config", str(CONFIGS / name), "--out-dir", str(out)]
                        + ([] if trials is None else ["--trials", str(trials)])) == 0
        outs.append((out / f"{sub}.csv").read_bytes())
    assert outs[0] == outs[1]
    rows = read_rows(tmp_path / "a" / f"{sub}.csv")
    assert rows and all("theorem" in r and "hypothesis" in r for r in rows)


def test_threads_do_not_change_output(tmp_path):
    cfg = str(CONFIGS / "covering_iid.toml")
    cli.main(["covering-iid", "--config", cfg, "--out-dir", str(tmp_path / "1"), "--trials", "120"])
    cli.main(["covering-iid", "--config", cfg, "--out-dir", str(tmp_path / "4"), "--trials", "120",
              "--threads", "4"])
    assert (tmp_path / "1" / "covering-iid.csv").read_bytes() == (tmp_path / "4" / "covering-iid.csv").read_bytes()


def test_bounds_row_values(tmp_path):
    cli.main(["bounds", "--config", str(CONFIGS / "bounds.toml"), "--out-dir", str(tmp_path)])
    rows = read_rows(tmp_path / "bounds.csv")
    exp = [r for r in rows if r["theorem"] == "expander-concentration"][0]
    assert float(exp["bound"]) == pytest.approx(1.9767, abs=1e-4)
    assert float(exp["d_i"]) == pytest.approx(0.0151367, abs=1e-7)
    assert (exp["a"], exp["b"]) == ("10", "9")
    exc = [r for r in rows if r["theorem"] == "bounded-excision"][0]
    assert float(exc["bound"]) == pytest.approx(1.9578, abs=1e-4)
    summary = json.loads((tmp_path / "bounds.json").read_text())
    assert summary["passed"] and summary["config"]["seed"] == 1


def test_missing_seed(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[graph]\nfamily = "cycle"\nn = 8\n')
    with pytest.raises(ConfigError):
        config.load(path, "spectral")
    assert cli.main(["spectral", "--config", str(path), "--out-dir", str(tmp_path)]) == 2
    assert cli.main(["spectral", "--config", str(path), "--out-dir", str(tmp_path), "--seed", "4"]) == 0


def test_config_validation(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1, "ensemble": {"generator": {"size": 4}}, "trials": 10}')
    with pytest.raises(ConfigError):
        config.load(bad, "covering-iid")
    with pytest.raises(ConfigError):
        config.resolve("spectral", {"seed": 1}, tmp_path)
    with pytest.raises(ConfigError):
        config.resolve("bounds", {"seed": 1, "eps": []}, tmp_path)
    with pytest.raises(ConfigError):
        config.load(tmp_path / "missing.toml", "bounds")
    cfg = config.resolve("covering-iid", {"seed": 5, "ensemble": {"generator": {"size": 4}}}, tmp_path)
    assert cfg.params["ensemble"]["generator"]["seed"] == 5
    assert cfg.params["trials"] == 500


def test_json_config_accepted(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"seed": 2, "graph": {"family": "complete", "n": 6}, "tmax": 5}))
    assert cli.run(path, "spectral", tmp_path) == 0
    rows = read_rows(tmp_path / "spectral.csv")
    assert all(r["pass"] == "true" for r in rows)


def test_validation_failure_exit(tmp_path, monkeypatch):
    def failing(cfg):
        return ["theorem", "pass"], [{"theorem": "x", "pass": False}], {}

    monkeypatch.setitem(cli.RUNNERS, "bounds", failing)
    with pytest.raises(ValidationFailure):
        cli.run(CONFIGS / "bounds.toml", "bounds", tmp_path)
    assert (tmp_path / "bounds.csv").exists()
    assert cli.main(["bounds", "--config", str(CONFIGS / "bounds.toml"), "--out-dir", str(tmp_path)]) == 1
