import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from panelshock import cli
from panelshock.config import load_config
from panelshock.data import file_hash, read_events
from panelshock.decomposition import VARIANTS, SurpriseMatrix, decompose_rotation

BUNDLE = Path(cli.__file__).parent / "data" / "lab_bundle"
CONFIG = BUNDLE / "lab.toml"
GOLDEN = json.loads((Path(__file__).parent / "golden" / "bundle_artifacts.json").read_text())


def hashes(out: Path) -> dict[str, str]:
    return {p.name: file_hash(p) for p in sorted(out.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def first_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run1")
    assert cli.main(["run", "--config", str(CONFIG), "--out", str(out), "--threads", "1"]) == 0
    return out


def test_run_matches_golden(first_run):
    got = hashes(first_run)
    for name, digest in GOLDEN.items():
        assert got[name] == digest, name
    assert set(got) == set(GOLDEN) | {"manifest.json"}


def test_run_deterministic_across_runs_and_threads(first_run, tmp_path):
    assert cli.main(["run", "--config", str(CONFIG), "--out", str(tmp_path / "a"), "--threads", "4"]) == 0
    assert hashes(tmp_path / "a") == hashes(first_run)


def test_env_threads(first_run, tmp_path, monkeypatch):
    monkeypatch.setenv("PANELSHOCK_THREADS", "3")
    assert cli.main(["run", "--config", str(CONFIG), "--out", str(tmp_path / "e")]) == 0
    assert hashes(tmp_path / "e") == hashes(first_run)


def test_manifest_reruns(first_run, tmp_path):
    manifest = json.loads((first_run / "manifest.json").read_text())
    assert manifest["seed"] == 20240601
    assert set(manifest["versions"]) == {"panelshock", "python", "numpy", "scipy"}
    for path, digest in manifest["inputs"].items():
        assert file_hash(path) == digest
    assert manifest["decomposition"]["mp_share"] == pytest.approx(0.68, abs=1e-6)
    assert cli.main(["run", "--config", str(first_run / "manifest.json"), "--out", str(tmp_path / "m")]) == 0
    assert hashes(tmp_path / "m") == hashes(first_run)


def test_decomposition_artifact_matches_library(first_run):
    m = SurpriseMatrix.from_events(read_events(BUNDLE / "events.csv"))
    w = json.loads((first_run / "manifest.json").read_text())["decomposition"]["w"]
    dec = decompose_rotation(m, w)
    rows = (first_run / "decomposition.csv").read_text().splitlines()[1:]
    rot = [r.split(",") for r in rows if ",rotation," in r]
    np.testing.assert_array_equal([float(r[3]) for r in rot], dec.u[:, 0])
    assert sum(",poor_man," in r for r in rows) == len(rot)


def test_seed_flag_changes_only_bayesian_outputs(first_run, tmp_path):
    assert cli.main(["run", "--config", str(CONFIG), "--out", str(tmp_path / "s"), "--seed", "7"]) == 0
    a, b = hashes(first_run), hashes(tmp_path / "s")
    for name in a:
        if name.startswith("irf_bvar_") or name == "manifest.json":
            assert a[name] != b[name]
        else:
            assert a[name] == b[name]


def test_list_variants(capsys):
    assert cli.main(["run", "--list-variants"]) == 0
    assert capsys.readouterr().out.split() == list(VARIANTS)


def _config_copy(tmp_path, edit):
    for f in ("events.csv", "panel.csv"):
        shutil.copy(BUNDLE / f, tmp_path / f)
    text = edit(CONFIG.read_text())
    (tmp_path / "lab.toml").write_text(text)
    return tmp_path / "lab.toml"


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_missing_input_is_parse_error(tmp_path, capsys):
    cfg = _config_copy(tmp_path, lambda t: t.replace('events = "events.csv"', 'events = "gone.csv"'))
    assert cli.main(["run", "--config", str(cfg)]) == 2
    err = error_of(capsys)
    assert err["category"] == "ParseError" and err["exit_code"] == 2


def test_missing_coverage_is_input_error(tmp_path, capsys):
    cfg = _config_copy(tmp_path, lambda t: t.replace('candidates = ["CPI", "PPI"]', 'candidates = ["CPI"]'))
    assert cli.main(["run", "--config", str(cfg)]) == 2
    err = error_of(capsys)
    assert err["category"] == "MissingCoverage"
    assert "AUS" in err["message"]


def test_bad_config_exit_3(tmp_path, capsys):
    cfg = _config_copy(tmp_path, lambda t: t + "\n[extra]\nx = 1\n")
    assert cli.main(["run", "--config", str(cfg)]) == 3
    assert error_of(capsys)["category"] == "ConfigError"
    assert cli.main(["run", "--config", str(tmp_path / "nope.toml")]) == 3
    (tmp_path / "broken.toml").write_text("seed = [")
    assert cli.main(["run", "--config", str(tmp_path / "broken.toml")]) == 3


def test_invalid_weight_exit_3(tmp_path, capsys):
    cfg = _config_copy(tmp_path, lambda t: t.replace("target_share = 0.68", "w = 1.5"))
    assert cli.main(["run", "--config", str(cfg)]) == 3
    assert error_of(capsys)["category"] == "InvalidWeight"


def test_unreachable_share_exit_1(tmp_path, capsys):
    assert cli.main(["decompose", "--events", str(BUNDLE / "events.csv"), "--target-share", "0.01",
                     "--out", str(tmp_path)]) == 1
    assert error_of(capsys)["category"] == "NoSolution"


def test_flag_overrides_config(tmp_path):
    cfg = load_config(CONFIG).with_overrides(seed=5, out=tmp_path)
    assert cfg.seed == 5 and cfg.bvar.seed == 5 and cfg.out == tmp_path


def test_decompose_subcommand(tmp_path, capsys):
    assert cli.main(["decompose", "--events", str(BUNDLE / "events.csv"), "--w", "0.5", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "mp_share" in out
    header = (tmp_path / "shocks_monthly.csv").read_text().splitlines()[0]
    assert header == "date," + ",".join(VARIANTS)


def _lab(tmp_path, scenario, reps=60, horizon=3):
    cfg = tmp_path / "lab.toml"
    cfg.write_text(f'seed = 11\n[lab]\nscenario = "{scenario}"\nreplications = {reps}\n'
                   f"horizon = {horizon}\nlp_replications = 10\n[bvar]\np = 2\n")
    assert cli.main(["lab", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "4"]) == 0
    summary = json.loads((tmp_path / "o" / "lab_summary.json").read_text())
    rows = (tmp_path / "o" / "lab_bias.csv").read_text().splitlines()
    return summary, rows


def test_lab_cancellation_reports_full_attenuation(tmp_path):
    summary, _ = _lab(tmp_path, "cancellation")
    assert summary["attenuation_min"] > 0.9
    assert summary["attenuation_max"] < 1.1


def test_lab_zero_id_attenuation_is_share(tmp_path):
    summary, rows = _lab(tmp_path, "zero_id")
    header = rows[0].split(",")
    ratios = [float(r.split(",")[header.index("ratio")]) for r in rows[1:]]
    assert np.allclose(ratios, summary["mp_share_mean"], atol=0.03)


def test_lab_default_sign_table(tmp_path):
    summary, rows = _lab(tmp_path, "default")
    assert summary["sign_table_matches"] == {"MP": True, "ID": True}
    assert summary["composite_between_everywhere"]
    assert summary["bvar_coefficient_coverage"] >= 0.9
    assert summary["decomposition_max_abs_error"] < 1e-8
    assert len(rows) == 1 + 4 * 4
