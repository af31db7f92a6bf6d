import json
import math
from pathlib import Path

import pytest

from habitat_opt.cli import RunConfig, main, parse_config
from habitat_opt.errors import ConfigError, InadmissibleVolume


def summary(out, command):
    (d,) = Path(out).glob(f"{command}-*")
    return json.loads((d / "summary.json").read_text()), d


def test_parse_valid_solve():
    cfg, _ = parse_config("solve --dims 1 --lengths 1 --beta 1 --delta 0.3 --n 1024".split())
    assert cfg.lengths == [1.0] and cfg.n == 1024 and cfg.delta == 0.3


def test_parse_rejects_volume():
    with pytest.raises(InadmissibleVolume, match=r"beta/\(1\+beta\)\|C\| = 0.5"):
        parse_config("solve --delta 0.6 --beta 1 --lengths 1".split())


def test_config_file_and_override(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"beta": 2.0, "delta": 0.05, "n": 64}))
    cfg, _ = parse_config(["solve", "--config", str(f), "--beta", "3"])
    assert cfg.beta == 3.0 and cfg.n == 64
    f.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(ConfigError, match="nonsense"):
        parse_config(["limit", "--config", str(f)])


def test_config_roundtrip():
    cfg, _ = parse_config("sweep --delta-list 0.1 0.05 --beta 2".split())
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.digest() == cfg.digest()


def test_limit_command(tmp_path):
    assert main(["limit", "--dims", "1", "--beta", "1", "--out", str(tmp_path), "--quiet"]) == 0
    s, d = summary(tmp_path, "limit")
    assert abs(s["Lambda0"] - math.pi**2 / 4) < 1e-10
    assert (d / "config.json").exists() and (d / "profile.csv").exists()
    # rerun refuses to overwrite, --force allows it
    assert main(["limit", "--dims", "1", "--beta", "1", "--out", str(tmp_path), "--quiet"]) == 1
    assert main(["limit", "--dims", "1", "--beta", "1", "--out", str(tmp_path), "--quiet", "--force"]) == 0


def test_solve_echoes_config(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"beta": 2.0, "delta": 0.2, "dims": 1, "n": 256}))
    assert main(["solve", "--config", str(f), "--beta", "1", "--out", str(tmp_path), "--quiet"]) == 0
    (d,) = tmp_path.glob("solve-*")
    assert json.loads((d / "config.json").read_text())["beta"] == 1.0
    assert (d / "history.csv").exists() and (d / "u.csv").exists()


def test_invalid_config_exit_code(tmp_path):
    assert main(["solve", "--delta", "0.6", "--beta", "1", "--lengths", "1", "--out", str(tmp_path)]) == 1


def test_sweep_partial_failure_and_determinism(tmp_path):
    args = ["sweep", "--delta-list", "0.7", "0.1", "--quiet"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 2
    assert main(args + ["--out", str(tmp_path / "b")]) == 2
    (da,), (db,) = (tmp_path / "a").glob("sweep-*"), (tmp_path / "b").glob("sweep-*")
    for name in ("sweep.csv", "summary.json", "fits.svg"):
        assert (da / name).read_bytes() == (db / name).read_bytes()
    rows = (da / "sweep.csv").read_text().splitlines()
    assert len(rows) == 3 and "InadmissibleVolume" in rows[1]


def test_dynamics_command(tmp_path):
    assert main(["dynamics", "--delta", "0.1", "--n", "64", "--out", str(tmp_path), "--quiet"]) == 0
    s, d = summary(tmp_path, "dynamics")
    assert [r["verdict"] for r in s["runs"]] == ["Persistence", "Extinction"]
    assert (d / "trajectory_0.5.csv").exists()


def test_verify_subset(tmp_path, capsys):
    assert main(["verify", "--checks", "1", "12", "--out", str(tmp_path), "--quiet"]) == 0
    s, _ = summary(tmp_path, "verify")
    assert [r["criterion"] for r in s["results"]] == [1, 12]
    assert "[PASS]" in capsys.readouterr().out
