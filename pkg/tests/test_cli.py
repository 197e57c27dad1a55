import csv
import json
import math

import numpy as np
import pytest

from ionchain import __version__
from ionchain import io as iio
from ionchain.cli import EXIT_DOMAIN, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from ionchain.equilibrium import solve_equilibrium
from ionchain.profile import FluorescenceProfile, detect_peaks, generate_synthetic_frame
from ionchain.units import CA40, Frequency, length_scale

REF = ["--fz-khz", "2.95"]


def _json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), *REF]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def analyze_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("analyze")
    code = main(["analyze", str(synth_dir / "manifest.json"), "--out", str(out), *REF, "--fz-err-khz", "0.13"])
    assert code == EXIT_OK
    return out


# -- usage -----------------------------------------------------------------------


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["estimate", "--fz-khz", "2.95"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == EXIT_USAGE
    assert main(["estimate", "--a0", "24.1"]) == EXIT_USAGE
    assert "--fz-khz or --vdc" in capsys.readouterr().err


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


# -- estimate --------------------------------------------------------------------


def test_estimate_reference(tmp_path, capsys):
    out = tmp_path / "est.json"
    args = ["estimate", "--a0", "24.1", "--a0-err", "0.2", *REF, "--fz-err-khz", "0.13", "--out", str(out)]
    assert main(args) == EXIT_OK
    rep = _json(out)["report"]
    assert rep["n_dubin"]["n"] == 157
    assert rep["n_dubin"]["rel_sigma"] == pytest.approx(0.05, abs=0.005)
    assert rep["dominant_uncertainty"] == "axial_frequency"
    assert "dubin" in capsys.readouterr().out


def test_estimate_james_only(capsys):
    assert main(["estimate", "--a0", "24.1", "--law", "james", *REF]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    james = [ln for ln in lines if ln.startswith("james")]
    assert len(james) == 1 and not any(ln.startswith("dubin") for ln in lines)
    assert 176 <= int(james[0].split()[2]) <= 179


def test_estimate_zero_errors(tmp_path):
    out = tmp_path / "e.json"
    assert main(["estimate", "--a0", "24.1", "--a0-err", "0", *REF, "--fz-err-khz", "0", "--out", str(out)]) == 0
    assert _json(out)["report"]["n_dubin"]["sigma"] == 0.0


def test_estimate_vdc_route(tmp_path):
    out = tmp_path / "e.json"
    assert main(["estimate", "--a0", "24.1", "--vdc", "2000", "--out", str(out)]) == EXIT_OK
    assert _json(out)["report"]["inputs"]["fz_khz"] == pytest.approx(2.95)


def test_estimate_domain_error(capsys):
    assert main(["estimate", "--a0", "400", *REF]) == EXIT_DOMAIN
    assert "two-ion" in capsys.readouterr().err


def test_species_registry_env(tmp_path, monkeypatch):
    ini = tmp_path / "sp.ini"
    ini.write_text("[Heavy]\nmass_amu = 80\ncharge_e = 1\n", encoding="utf-8")
    monkeypatch.setenv("IONCHAIN_SPECIES_REGISTRY", str(ini))
    out = tmp_path / "e.json"
    assert main(["estimate", "--a0", "24.1", "--species", "Heavy", *REF, "--out", str(out)]) == EXIT_OK
    assert _json(out)["report"]["inputs"]["species"]["mass_amu"] == 80.0
    assert main(["estimate", "--a0", "24.1", "--species", "Nope", *REF]) == EXIT_DOMAIN


# -- simulate --------------------------------------------------------------------


def test_simulate_reference_chain(tmp_path):
    assert main(["simulate", "--n", "155", *REF, "--fx-khz", "157", "--out", str(tmp_path)]) == EXIT_OK
    s = _json(tmp_path / "summary.json")
    assert s["config"]["n"] == 155 and s["tool_version"] == __version__
    summ = s["summary"]
    assert summ["a0_dubin_um"] == pytest.approx(24.3, abs=0.05)
    # recorded oracle-vs-model gap of this build
    assert summ["a0_rel_diff_dubin"] == pytest.approx(0.0267, abs=5e-4)
    assert summ["stability_margin"] == pytest.approx(0.0419, abs=5e-4)
    assert len(_rows(tmp_path / "positions.csv")) == 155
    assert len(_rows(tmp_path / "spacings.csv")) == 154


@pytest.mark.xfail(strict=True, reason="oracle minimum spacing exceeds the closed form by 2.7 % at 155 ions")
def test_simulate_reference_chain_within_model_accuracy(tmp_path):
    main(["simulate", "--n", "155", *REF, "--out", str(tmp_path)])
    assert abs(_json(tmp_path / "summary.json")["summary"]["a0_rel_diff_dubin"]) <= 0.015


def test_simulate_two_ions(tmp_path):
    assert main(["simulate", "--n", "2", *REF, "--out", str(tmp_path)]) == EXIT_OK
    l = length_scale(CA40, Frequency.from_khz(2.95)).um
    pos = [float(r["position_um"]) for r in _rows(tmp_path / "positions.csv")]
    assert pos == pytest.approx([-(2 ** (1 / 3)) / 2 * l, 2 ** (1 / 3) / 2 * l], rel=1e-12)


def test_simulate_single_ion(tmp_path):
    assert main(["simulate", "--n", "1", *REF, "--out", str(tmp_path)]) == EXIT_OK
    assert [float(r["position_l_units"]) for r in _rows(tmp_path / "positions.csv")] == [0.0]
    assert (tmp_path / "spacings.csv").read_text(encoding="utf-8") == "midpoint_um,spacing_um\n"


def test_simulate_sweep(tmp_path):
    assert main(["simulate", "--n-range", "2:12", "--workers", "2", *REF, "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "sweep.csv")
    assert [int(r["n_ions"]) for r in rows] == list(range(2, 13))
    ratios = [float(r["critical_ratio"]) for r in rows]
    assert ratios[0] == pytest.approx(1.0) and all(np.diff(ratios) < 0)
    assert main(["simulate", "--n-range", "5", *REF, "--out", str(tmp_path)]) == EXIT_USAGE


def test_simulate_convergence_failure_exit(monkeypatch, tmp_path, capsys):
    from ionchain import cli
    from ionchain.equilibrium import ConvergenceError

    def boom(n):
        raise ConvergenceError("stalled", np.zeros(n), 1.0, 500)

    monkeypatch.setattr(cli, "solve_equilibrium", boom)
    assert main(["simulate", "--n", "5", *REF, "--out", str(tmp_path)]) == EXIT_NUMERIC
    assert "stalled" in capsys.readouterr().err


# -- stability -------------------------------------------------------------------


def test_stability_two_ions(tmp_path):
    assert main(["stability", "--n", "2", "--fz-khz", "1", "--fr-khz", "2"]) == EXIT_OK
    out = tmp_path / "s.json"
    assert main(["stability", "--n", "2", "--fz-khz", "1", "--fr-khz", "0.5", "--out", str(out)]) == EXIT_DOMAIN
    s = _json(out)
    assert s["rho"] == pytest.approx(4.0) and s["stable"] is False


def test_stability_reference_trap(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["stability", "--n", "155", *REF, "--fx-khz", "157", "--out", str(out)]) == EXIT_OK
    s = _json(out)
    assert s["fr_khz"] == pytest.approx(156.986, abs=1e-3)
    assert s["margin"] == pytest.approx(0.0419, abs=5e-4)
    assert main(["stability", "--n", "155", *REF, "--vrf", "2000"]) == EXIT_OK
    assert main(["stability", "--n", "155", *REF]) == EXIT_USAGE


# -- calibrate -------------------------------------------------------------------


def _write_pairs(path, stage_um, image_px):
    iio.write_csv(path, ["stage_um", "image_px"], zip(map(float, stage_um), map(float, image_px)))


def test_calibrate_exact(tmp_path):
    stage = np.linspace(0, 1000, 9)
    _write_pairs(tmp_path / "p.csv", stage, 40 + stage * 11.58 / 13)
    out = tmp_path / "c.json"
    assert main(["calibrate", str(tmp_path / "p.csv"), "--out", str(out)]) == EXIT_OK
    fit = _json(out)["fit"]
    assert fit["magnification"] == pytest.approx(11.58, rel=1e-9)
    assert max(abs(r) for r in fit["residuals_px"]) < 1e-9
    assert str(tmp_path / "p.csv") in _json(out)["input_checksums"]


def test_calibrate_rejects_two_points(tmp_path):
    _write_pairs(tmp_path / "p.csv", [0, 100], [0, 89])
    assert main(["calibrate", str(tmp_path / "p.csv")]) == EXIT_DOMAIN
    assert main(["calibrate", str(tmp_path / "missing.csv")]) == EXIT_USAGE


# -- synth / analyze -------------------------------------------------------------


def test_synth_outputs(synth_dir):
    m = _json(synth_dir / "manifest.json")
    assert m["magnification"] == 11.58 and m["pixel_size_um"] == 13.0
    offs = [f["nominal_offset_um"] for f in m["frames"]]
    assert np.diff(offs) == pytest.approx([1000.0] * 4)
    assert offs[2] + 511.5 * 13 / 11.58 == pytest.approx(0.0, abs=1e-9)
    assert len(_rows(synth_dir / "frame_0.csv")) == 1024
    assert len(_json(synth_dir / "truth.json")["ion_positions_um"]) == 155


def test_analyze_synthetic_scan(analyze_dir):
    st = _json(analyze_dir / "stitch.json")["stitch"]
    assert st["total_count"] == 155
    assert st["warnings"] == []
    rep = _json(analyze_dir / "estimate.json")["report"]
    # recorded: oracle-based frames give N_D about 5 % low
    assert rep["n_dubin"]["n_real"] == pytest.approx(147.1, abs=1.0)
    curve = _rows(analyze_dir / "density_fit.csv")
    assert len(curve) == 512
    d = _json(analyze_dir / "density_fit.json")
    assert d["full_length_fit_um"] > d["full_length_measured_um"]
    assert len(_rows(analyze_dir / "spacings.csv")) == 154
    peaks = _json(analyze_dir / "peaks.json")
    assert len(peaks["frames"]) == 5
    assert set(peaks["input_checksums"]) >= {str(analyze_dir.parent)} or len(peaks["input_checksums"]) == 6


def test_reproducible_bytes(tmp_path, monkeypatch):
    digests = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        monkeypatch.chdir(d)
        assert main(["synth", "--out", "s", "--seed", "4", *REF]) == EXIT_OK
        assert main(["analyze", "s/manifest.json", "--out", "a", *REF]) == EXIT_OK
        files = sorted(p for p in d.rglob("*") if p.is_file())
        digests.append({str(p.relative_to(d)): iio.sha256_file(p) for p in files})
    assert digests[0] == digests[1]
    assert len(digests[0]) == 7 + 6


def test_analyze_single_frame_ten_ions(tmp_path):
    fz = Frequency.from_khz(20.0)
    x = solve_equilibrium(10).as_float() * length_scale(CA40, fz).value
    offset = -511.5 * 13e-6 / 11.58
    f = generate_synthetic_frame(x, 11.58, 13e-6, 2e-6, 200.0, frame_offset=offset, background=2.0)
    iio.write_frame_csv(tmp_path / "f.csv", f.profile)
    iio.write_manifest(tmp_path / "m.json", 11.58, 13.0, [("f.csv", offset * 1e6)])
    out = tmp_path / "out"
    assert main(["analyze", str(tmp_path / "m.json"), "--out", str(out), "--fz-khz", "20"]) == EXIT_OK
    st = _json(out / "stitch.json")["stitch"]
    assert st["total_count"] == 10
    np.testing.assert_allclose(np.array(st["global_positions_um"]) * 1e-6, x, atol=0.05e-6)


def test_analyze_ambiguity_injection(synth_dir, tmp_path, capsys):
    m = _json(synth_dir / "manifest.json")
    for entry in m["frames"]:
        (tmp_path / entry["file"]).write_bytes((synth_dir / entry["file"]).read_bytes())
    (tmp_path / "manifest.json").write_text(json.dumps(m), encoding="utf-8")
    prof = iio.read_frame_csv(tmp_path / "frame_0.csv", 13e-6, 0.0)
    peaks = detect_peaks(prof)
    c = peaks.centers
    j = int(np.flatnonzero((c > 930) & (c < 990))[0])
    spot = c[j] + 0.35 * (c[j + 1] - c[j])
    px = np.arange(prof.n_pixels)
    y = prof.intensities + 200.0 * np.exp(-0.5 * ((px - spot) / 1.78) ** 2)
    iio.write_frame_csv(tmp_path / "frame_0.csv", FluorescenceProfile(np.round(y), 13e-6))
    code = main(["analyze", str(tmp_path / "manifest.json"), "--out", str(tmp_path / "out"), *REF])
    assert code == EXIT_DOMAIN
    err = capsys.readouterr().err
    assert "stage 'stitch'" in err and "ambiguous" in err and "frames 0 and 1" in err


def test_analyze_detect_failure_names_frame(tmp_path, capsys):
    iio.write_frame_csv(tmp_path / "f.csv", FluorescenceProfile(np.full(64, 3.0), 13e-6))
    iio.write_manifest(tmp_path / "m.json", 11.58, 13.0, [("f.csv", 0.0)])
    assert main(["analyze", str(tmp_path / "m.json"), "--out", str(tmp_path / "o"), *REF]) == EXIT_DOMAIN
    assert "stage 'detect' failed (frame 0)" in capsys.readouterr().err


def test_analyze_bad_manifest(tmp_path):
    (tmp_path / "m.json").write_text('{"frames": []}', encoding="utf-8")
    assert main(["analyze", str(tmp_path / "m.json"), *REF]) == EXIT_DOMAIN
