import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from pipsim.cli import (
    EXIT_CONFIG,
    EXIT_GEOMETRY,
    EXIT_INPUT,
    EXIT_OK,
    main,
)
from pipsim.core import load_feature_csv, random_kernel, save_weights


@pytest.fixture
def workspace(tmp_path, rng):
    scene_path = tmp_path / "scene.pgm"
    arr = rng.integers(0, 256, size=(32, 32), dtype=np.uint8)
    Image.fromarray(arr, mode="L").save(scene_path)
    weights_path = tmp_path / "weights.txt"
    save_weights(weights_path, 2, [random_kernel(3, rng, c) for c in range(2)])
    config_path = tmp_path / "sensor.cfg"
    config_path.write_text(
        "width_px = 32\nheight_px = 32\ni_dark = 0\nr_leak = inf\n")
    return tmp_path, scene_path, weights_path, config_path


def run_simulate(ws, out_name, extra=()):
    tmp, scene, weights, config = ws
    out = tmp / out_name
    code = main(["simulate", "--config", str(config), "--scene", str(scene),
                 "--weights", str(weights), "--out", str(out),
                 "--adc", "bypass", *extra])
    assert code == EXIT_OK
    return out


def test_simulate_writes_outputs_matching_oracle(workspace):
    out = run_simulate(workspace, "run1")
    assert (out / "manifest.json").exists()
    assert (out / "schedule.csv").exists()
    got = load_feature_csv(out / "feature_ch000.csv")

    from pipsim.core import load_config, load_weights, validate_config
    from pipsim.optics import default_lux_scale, load_raster, scene_from_image
    from pipsim.optics import photocurrents
    from pipsim.analysis import oracle_conv

    tmp, scene_path, weights_path, config_path = workspace
    cfg = validate_config(load_config(config_path))
    stride, kernels = load_weights(weights_path)
    scene = scene_from_image(load_raster(scene_path), default_lux_scale(), cfg)
    ref = oracle_conv(photocurrents(scene, cfg), kernels, stride)[0].values
    np.testing.assert_allclose(got, ref, rtol=1e-9)


def test_simulate_same_seed_identical_bytes(workspace):
    out1 = run_simulate(workspace, "a", ["--noise", "on", "--seed", "9"])
    out2 = run_simulate(workspace, "b", ["--noise", "on", "--seed", "9"])
    for name in ("feature_ch000.csv", "feature_ch001.csv", "schedule.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_simulate_different_seed_differs(workspace):
    out1 = run_simulate(workspace, "a", ["--noise", "on", "--seed", "1"])
    out2 = run_simulate(workspace, "b", ["--noise", "on", "--seed", "2"])
    assert ((out1 / "feature_ch000.csv").read_bytes()
            != (out2 / "feature_ch000.csv").read_bytes())


def test_replay_reproduces_bytes(workspace):
    tmp = workspace[0]
    out1 = run_simulate(workspace, "orig", ["--noise", "on", "--seed", "4"])
    code = main(["replay", str(out1 / "manifest.json"),
                 "--out", str(tmp / "redo")])
    assert code == EXIT_OK
    assert ((out1 / "feature_ch000.csv").read_bytes()
            == (tmp / "redo" / "feature_ch000.csv").read_bytes())


def test_manifest_contents(workspace):
    out = run_simulate(workspace, "m")
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "simulate"
    assert man["version"]
    assert man["options"]["policy"] == "full-coverage"


def test_binary_output(workspace):
    out = run_simulate(workspace, "bin", ["--binary"])
    raw = np.fromfile(out / "feature_ch000.f64", dtype="<f8")
    csv = load_feature_csv(out / "feature_ch000.csv")
    np.testing.assert_array_equal(raw.reshape(csv.shape), csv)
    hdr = (out / "feature_ch000.f64.hdr").read_text()
    assert "float64-le" in hdr


def test_missing_weights_is_input_error(workspace, capsys):
    tmp, scene, _, config = workspace
    code = main(["simulate", "--config", str(config), "--scene", str(scene),
                 "--weights", str(tmp / "absent.txt"), "--out", str(tmp / "x")])
    assert code == EXIT_INPUT
    assert "input error" in capsys.readouterr().err


def test_bad_config_exit_code(workspace, capsys):
    tmp, scene, weights, _ = workspace
    bad = tmp / "bad.cfg"
    bad.write_text("width_px = 31\n")
    code = main(["simulate", "--config", str(bad), "--scene", str(scene),
                 "--weights", str(weights), "--out", str(tmp / "x")])
    assert code == EXIT_CONFIG


def test_unsupported_kernel_size_exit_code(capsys):
    code = main(["rates", "--kernel-sizes", "4"])
    assert code == EXIT_GEOMETRY


def test_rates_prints_reference_table(capsys):
    assert main(["rates"]) == EXIT_OK
    out = capsys.readouterr().out
    for token in ("327.68 kHz", "234.06 kHz", "182.04 kHz", "148.95 kHz",
                  "3840", "1371", "711", "436"):
        assert token in out


def test_rates_resolution_table(capsys):
    assert main(["rates", "--kernel-sizes", "3", "--heights",
                 "1080", "720", "480", "128", "32"]) == EXIT_OK
    out = capsys.readouterr().out
    for token in ("2.76 MHz", "1.84 MHz", "1.23 MHz", "327.68 kHz",
                  "81.92 kHz"):
        assert token in out


def test_power_prints_reference_table(capsys):
    assert main(["power"]) == EXIT_OK
    out = capsys.readouterr().out
    for token in ("245.13", "490.25", "358.79", "89.70", "529.29", "132.32",
                  "4.62", "8.77", "11.65", "3.90", "5.70", "1.43", "8.41",
                  "2.10"):
        assert token in out


def test_power_custom_fps(capsys):
    assert main(["power", "--fps", "30", "--r", "3", "--s", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "122.56" in out  # half of the 60 fps total


def test_power_rejects_zero_fps(capsys):
    assert main(["power", "--fps", "0"]) != EXIT_OK


def test_curve_command(capsys):
    assert main(["curve", "--lux", "10", "1000", "100000"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "computing" in out and "traditional" in out


def test_sweep_noise_cli(workspace, capsys):
    tmp, scene, weights, config = workspace
    out = tmp / "sweep"
    code = main(["sweep-noise", "--config", str(config), "--scene", str(scene),
                 "--weights", str(weights), "--snr-grid", "40", "0",
                 "--mismatch-grid", "0.05", "--trials", "1",
                 "--seed", "2", "--out", str(out)])
    assert code == EXIT_OK
    text = (out / "rms_sweep.csv").read_text().strip().splitlines()
    assert text[0] == "sigma_cap,snr_db,mean_rms,trials,seed"
    assert len(text) == 3


def test_sweep_noise_zero_trials(workspace):
    tmp, scene, weights, config = workspace
    code = main(["sweep-noise", "--config", str(config), "--scene", str(scene),
                 "--weights", str(weights), "--trials", "0",
                 "--out", str(tmp / "s")])
    assert code == EXIT_INPUT


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_rates_csv_matches_golden(tmp_path):
    out = tmp_path / "rates.csv"
    assert main(["rates", "--heights", "1080", "720", "480", "128", "32",
                 "--csv", str(out)]) == EXIT_OK
    golden = Path(__file__).parent / "golden" / "rates.csv"
    assert out.read_bytes() == golden.read_bytes()


def test_power_csv_matches_golden(tmp_path):
    out = tmp_path / "power.csv"
    assert main(["power", "--csv", str(out)]) == EXIT_OK
    golden = Path(__file__).parent / "golden" / "power.csv"
    assert out.read_bytes() == golden.read_bytes()


def test_dump_scene_flag(workspace):
    out = run_simulate(workspace, "scenedump", ["--dump-scene"])
    data = np.loadtxt(out / "scene.csv", delimiter=",")
    assert data.shape == (32, 32)
    assert data.min() >= 0.0
