import csv

import numpy as np
import pytest
import yaml

from nlms import CellSet, CylinderDomain, ExteriorGraphData, GridDescriptor
from nlms import io
from nlms.cli import ConfigError, main, parse_config, run

BASE = """\
command: minimize
grid: {h: 0.125, nx: 24, ny: 24}
domain: {intervals: [[-1.0, 1.0]]}
exterior: {type: jump, left: 0.0, right: 0.5}
kernel: {s: 0.25}
"""


def _write(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_config_fills_defaults():
    cfg = parse_config(BASE)
    assert cfg.kernel.tail_policy == "halfspace_columns"
    assert cfg.solver.method == "exact"
    assert cfg.curvature.radii == [8.0, 4.0, 2.0]


def test_s_out_of_range_is_named():
    with pytest.raises(ConfigError) as exc:
        parse_config(BASE.replace("s: 0.25", "s: 0.6"))
    assert any("s must lie in (0, 1/2)" in e for e in exc.value.errors)


def test_all_errors_listed_together():
    bad = BASE.replace("h: 0.125", "h: -1").replace("s: 0.25", "s: 0.6")
    with pytest.raises(ConfigError) as exc:
        parse_config(bad)
    locs = {e.split(":")[0] for e in exc.value.errors}
    assert {"grid.h", "kernel.s"} <= locs


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config(BASE + "colour: blue\n")
    assert any(e.startswith("colour") for e in exc.value.errors)


def test_malformed_yaml_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config(BASE + "solver: {method: exact\n")
    assert "line" in exc.value.errors[0]


def test_missing_problem_sections():
    with pytest.raises(ConfigError, match="needs sections"):
        parse_config("command: verify\nkernel: {s: 0.25}\n")
    parse_config("command: lemma-check\nkernel: {s: 0.25}\n")


def test_to_text_round_trip():
    cfg = parse_config(BASE)
    again = parse_config(cfg.to_text())
    assert again == cfg and again.to_text() == cfg.to_text()


def test_minimize_writes_artifacts_deterministically(tmp_path):
    cfg = parse_config(BASE)
    out = tmp_path / "a" / "b"
    assert run(cfg, out) == 0
    report = yaml.safe_load((out / "report.yaml").read_text())
    assert report["status"] == 0 and report["graph"]["is_graph"]
    first = [(out / f).read_bytes() for f in ("report.yaml", "minimizer.pgm")]
    assert run(cfg, out) == 0
    assert [(out / f).read_bytes() for f in ("report.yaml", "minimizer.pgm")] == first
    E, dom, ext = io.read_raster(out / "minimizer.pgm")
    assert dom == CylinderDomain(((-1.0, 1.0),)) and E.grid.nx == 24


def test_verify_non_graph_raster_fails(tmp_path):
    g = GridDescriptor(0.125, 16, 16)
    E = CellSet.subgraph(g, np.full(16, 8.0))
    bits = np.array(E.bits)
    bits[12, 7] = True
    raster = tmp_path / "bad.pgm"
    io.write_raster(E.with_bits(bits), raster, CylinderDomain(((-1.0, 1.0),)),
                    ExteriorGraphData(np.zeros(16)))
    cfg = _write(tmp_path, f"command: verify\nkernel: {{s: 0.25}}\ninput: {{raster: {raster}}}\n")
    out = tmp_path / "out"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 1
    report = yaml.safe_load((out / "report.yaml").read_text())
    assert report["graph"]["violations"]
    assert "graph_check found violations" in report["failures"]


def test_verify_minimizer_passes(tmp_path):
    cfg = _write(tmp_path, BASE.replace("minimize", "verify"))
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


def test_main_bad_config_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, BASE.replace("s: 0.25", "s: 0.6"))
    assert main(["minimize", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "s must lie in (0, 1/2)" in capsys.readouterr().err
    assert main(["minimize", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_domain_outside_window_exit_2(tmp_path):
    cfg = _write(tmp_path, BASE.replace("[[-1.0, 1.0]]", "[[-5.0, 1.0]]"))
    out = tmp_path / "o"
    assert main(["minimize", "--config", str(cfg), "--out", str(out)]) == 2
    assert yaml.safe_load((out / "report.yaml").read_text())["error"]


def test_command_line_overrides_config_command(tmp_path):
    cfg = _write(tmp_path, BASE)
    out = tmp_path / "o"
    assert main(["slide", "--config", str(cfg), "--out", str(out)]) == 0
    report = yaml.safe_load((out / "report.yaml").read_text())
    assert report["command"] == "slide" and report["contact"]["t"] == 0


def test_lemma_check(tmp_path):
    cfg = _write(tmp_path, "command: lemma-check\nkernel: {s: 0.25}\n")
    out = tmp_path / "o"
    assert main(["lemma-check", "--config", str(cfg), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "lemma.csv")))
    assert len(rows) == 14 and {r["kind"] for r in rows} == {"trap", "graph_trap"}
    lemma = yaml.safe_load((out / "report.yaml").read_text())["lemma"]
    assert lemma["trap_lambda_exponent"] == pytest.approx(0.5, rel=0.1)
    assert lemma["graph_trap_L_exponent"] == pytest.approx(0.4, rel=0.1)


def test_curvature_scan(tmp_path):
    cfg = _write(tmp_path, BASE.replace("minimize", "curvature-scan"))
    out = tmp_path / "o"
    assert main(["curvature-scan", "--config", str(cfg), "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "curvature.csv")))
    report = yaml.safe_load((out / "report.yaml").read_text())
    assert len(rows) - 1 == report["curvature"]["samples"] > 0
