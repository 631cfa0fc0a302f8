import numpy as np
import pytest

from qbitnegf.cli import main, parse_range
from qbitnegf.manifest import RunManifest, format_value, read_csv


def test_parse_range_inclusive():
    np.testing.assert_allclose(parse_range("1.12:1.16:0.002"), np.round(np.linspace(1.12, 1.16, 21), 12))
    assert parse_range("30:48:2").size == 10
    assert parse_range("0.5").tolist() == [0.5]


def test_format_value_round_trips():
    for x in (0.1, 1e-300, -3.25e17, 7.748091729e-05):
        assert float(format_value(x)) == x
    assert format_value(float("nan")) == "nan"
    assert format_value(np.float64(0.5)) == "0.5"


def test_manifest_hash_ignores_timestamp():
    a = RunManifest({"bias": {"vg1": 1.0}}, "scf", {"x": 1}, created="t1")
    b = RunManifest({"bias": {"vg1": 1.0}}, "scf", {"x": 1}, created="t2")
    c = RunManifest({"bias": {"vg1": 1.1}}, "scf", {"x": 1}, created="t1")
    assert a.digest == b.digest != c.digest


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main(["scf", "--bogus", "1", "--out", str(tmp_path)]) == 1
    assert main(["stability", "--vg1", "1:0:0.1", "--out", str(tmp_path)]) == 1
    assert main(["nosuchcommand"]) == 1


def test_unknown_config_key_exit_1(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[bias]\nvg7 = 1.0\n")
    assert main(["scf", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_selftest_passes(tmp_path):
    assert main(["selftest", "--out", str(tmp_path)]) == 0
    _, cols, rows = read_csv(tmp_path / "selftest.csv")
    assert cols == ["check", "passed", "detail"]
    assert all(r[1] == "1" for r in rows) and len(rows) == 6


def test_scf_outputs_and_precedence(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[bias]\nvg1 = 0.9\nvg2 = 1.3\n")
    code = main(["scf", "--config", str(cfg), "--vg1", "1.15", "--out", str(tmp_path), "--dump-hamiltonian"])
    assert code == 0
    head, cols, rows = read_csv(tmp_path / "scf_band.csv")
    assert head.startswith("# qbitnegf") and "manifest=" in head
    assert cols == ["z_nm", "Ec_eV", "Esub1_eV", "phi_V", "n_cm3"]
    assert len(rows) == 72
    _, _, man = read_csv(tmp_path / "scf_manifest.csv")
    entries = {(r[0], r[1]): r[2] for r in man}
    assert entries[("bias", "vg1")] == "1.15"  # flag beats config
    assert entries[("bias", "vg2")] == "1.3"
    # every CSV of the run carries the same manifest hash
    digest = head.split("manifest=")[1].split()[0]
    for name in ("scf_residuals.csv", "hamiltonian.csv", "scf_manifest.csv"):
        assert f"manifest={digest}" in read_csv(tmp_path / name)[0]


def test_stability_deterministic_across_workers(tmp_path):
    args = ["stability", "--vg1", "1.14:1.142:0.002", "--vg2", "1.342:1.343:0.001", "--vd", "0.042"]
    assert main(args + ["--out", str(tmp_path / "a"), "--workers", "1"]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    ha, *body_a = (tmp_path / "a" / "stability.csv").read_text().splitlines()
    hb, *body_b = (tmp_path / "b" / "stability.csv").read_text().splitlines()
    assert body_a == body_b
    assert ha.split(" created=")[0] == hb.split(" created=")[0]


def test_stability_hole_exits_2(tmp_path, monkeypatch):
    import qbitnegf.qubit as q

    real = q.scf_iterate

    def flaky(spec_, mat_, bias, num_):
        if bias.vg2 > 1.3425:
            raise FloatingPointError("synthetic failure")
        return real(spec_, mat_, bias, num_)

    monkeypatch.setattr(q, "scf_iterate", flaky)
    code = main(["stability", "--vg1", "1.14", "--vg2", "1.342:1.343:0.001", "--vd", "0.042",
                 "--workers", "1", "--out", str(tmp_path)])
    assert code == 2
    _, _, rows = read_csv(tmp_path / "stability.csv")
    assert [r[3] for r in rows] == ["ok", "hole"]
    assert rows[1][2] == "nan"


def test_plot_flag_writes_png(tmp_path):
    pytest.importorskip("matplotlib")
    assert main(["init-check", "--out", str(tmp_path), "--plot"]) == 0
    assert (tmp_path / "init_check.png").stat().st_size > 0
    assert (tmp_path / "init_check.csv").exists()
