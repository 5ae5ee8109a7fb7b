import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from mmc_fofpi import config as cfgmod
from mmc_fofpi.cli import main
from mmc_fofpi.errors import ConfigurationError
from mmc_fofpi.tuning import TuningSpec

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class TestConfig:
    def test_defaults_build(self):
        sc = cfgmod.build_scenario(cfgmod.load())
        assert sc.controller.kind == "fopi" and sc.vdc0 == 500.0

    def test_layering_and_override(self):
        cfg = cfgmod.load([CONFIGS / "vdc450.yaml", CONFIGS / "fofpi.yaml"],
                          ["scenario.duration=0.3", "fis.d.blend_m=0.25"])
        sc = cfgmod.build_scenario(cfg)
        assert sc.vdc0 == 450.0 and sc.duration == 0.3
        assert sc.controller.kind == "fofpi" and sc.controller.fis_d.blend_m == 0.25

    @pytest.mark.parametrize("item", ["scenario.durration=1", "nope=1", "controller.fopi.x.kp=1"])
    def test_unknown_keys(self, item):
        with pytest.raises(ConfigurationError):
            cfgmod.load([], [item])

    def test_bad_override_syntax(self):
        with pytest.raises(ConfigurationError):
            cfgmod.parse_override("scenario.duration")

    def test_tuning_dimensions(self):
        spec, woa, workers = cfgmod.build_tuning(cfgmod.load())
        assert spec.dim == 6 and woa.dim == 6 and workers >= 1
        spec, woa, _ = cfgmod.build_tuning(cfgmod.load([CONFIGS / "fofpi.yaml"]))
        assert spec.dim == 38 and woa.dim == 38

    def test_zero_dimensional_space(self):
        with pytest.raises(ConfigurationError):
            cfgmod.build_tuning(cfgmod.load([], ["woa.bounds=[]"]))

    def test_shipped_files_load(self):
        for path in CONFIGS.glob("*.yaml"):
            cfgmod.build_scenario(cfgmod.load([path]))


class TestSimulate:
    def test_missing_config(self, tmp_path):
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(tmp_path / "missing.yaml"), "--out-dir", str(out)]) == 1
        assert not out.exists()

    def test_default_run(self, tmp_path):
        assert main(["simulate", "--out-dir", str(tmp_path)]) == 0
        (csv_path,) = tmp_path.glob("run_*.csv")
        header = csv_path.read_text().splitlines()[0].split(",")
        assert header[:3] == ["t", "vdc", "i_u_a"] and "v_ll_ab" in header and "kp_d" in header
        summary = json.loads(next(tmp_path.glob("run_*_summary.json")).read_text())
        assert summary["fingerprint"] in csv_path.name

    def test_divergent_run(self, tmp_path, capsys):
        code = main(["simulate", "--out-dir", str(tmp_path),
                     "--set", "controller.fopi.d.ki=1e6", "--set", "controller.fopi.q.ki=1e6",
                     "--set", "controller.u_max=1e4"])
        assert code == 2
        summary = json.loads(next(tmp_path.glob("run_*_summary.json")).read_text())
        assert 0 < summary["fault"]["t"] < 0.4
        assert "fault" in capsys.readouterr().err
        assert next(tmp_path.glob("run_*.csv")).exists()

    def test_plots(self, tmp_path):
        assert main(["simulate", "--out-dir", str(tmp_path), "--plots",
                     "--set", "scenario.duration=0.2"]) == 0
        svgs = sorted(p.name.rsplit("_", 1)[1] for p in tmp_path.glob("*.svg"))
        assert svgs == ["gains.svg", "idq.svg", "vll.svg"]

    def test_inputs_not_mutated(self, tmp_path):
        before = digest(CONFIGS / "vdc450.yaml")
        main(["simulate", "--config", str(CONFIGS / "vdc450.yaml"), "--out-dir", str(tmp_path),
              "--set", "scenario.duration=0.2"])
        assert digest(CONFIGS / "vdc450.yaml") == before


class TestTune:
    def run(self, out, *extra):
        args = ["tune", "--config", str(CONFIGS / "quick_tune.yaml"), "--out-dir", str(out),
                "--set", "scenario.duration=0.2", *extra]
        return main(args)

    def test_fopi_outputs_and_reload(self, tmp_path):
        assert self.run(tmp_path) == 0
        (conv,) = tmp_path.glob("convergence_*.csv")
        rows = list(csv.reader(conv.open()))
        assert rows[0] == ["iter", "best_fitness", "mean_fitness", "elapsed_s"]
        assert len(rows) == 1 + 6
        best = [float(r[1]) for r in rows[1:]]
        assert all(b <= a for a, b in zip(best, best[1:]))
        (frag,) = tmp_path.glob("best_*.yaml")
        assert set(yaml.safe_load(frag.read_text())) == {"controller"}
        assert main(["simulate", "--config", str(frag), "--out-dir", str(tmp_path / "sim"),
                     "--set", "scenario.duration=0.2"]) in (0, 2)

    def test_same_seed_same_result(self, tmp_path):
        assert self.run(tmp_path / "a") == 0 and self.run(tmp_path / "b") == 0
        (fa,), (fb,) = (tmp_path / "a").glob("best_*.yaml"), (tmp_path / "b").glob("best_*.yaml")
        assert fa.name == fb.name and fa.read_bytes() == fb.read_bytes()

    def test_fofpi_fragment(self, tmp_path):
        assert self.run(tmp_path, "--config", str(CONFIGS / "fofpi.yaml"),
                        "--set", "woa.max_iter=1", "--set", "woa.pop_size=3") == 0
        frag = yaml.safe_load(next(tmp_path.glob("best_*.yaml")).read_text())
        assert frag["controller"]["kind"] == "fofpi" and "d" in frag["fis"]
        cfg = cfgmod.load([next(tmp_path.glob("best_*.yaml"))])
        assert cfgmod.build_scenario(cfg).controller.kind == "fofpi"

    def test_zero_dim_exit(self, tmp_path):
        assert self.run(tmp_path, "--set", "woa.bounds=[]") == 1


class TestThdBode:
    def test_thd_cli(self, tmp_path, capsys):
        fs, f0 = 10000.0, 50.0
        t = np.arange(1000) / fs
        x = np.sin(2 * np.pi * f0 * t) + 0.05 * np.sin(6 * np.pi * f0 * t) + 0.05 * np.sin(10 * np.pi * f0 * t)
        path = tmp_path / "sig.csv"
        np.savetxt(path, np.column_stack([t, x]), delimiter=",", header="t,value", comments="")
        assert main(["thd", str(path), "--f0", "50"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["thd"] == pytest.approx(0.070711, abs=1e-6)

    def test_thd_missing(self, tmp_path):
        assert main(["thd", str(tmp_path / "nope.csv")]) == 1

    def test_thd_too_short(self, tmp_path):
        path = tmp_path / "short.csv"
        np.savetxt(path, np.column_stack([np.arange(100) / 1e4, np.ones(100)]), delimiter=",")
        assert main(["thd", str(path)]) == 1

    def test_bode(self, tmp_path):
        assert main(["bode", "--alpha", "0.5", "--band", "0.001", "1000", "--n-filter", "20",
                     "--out-dir", str(tmp_path)]) == 0
        (path,) = tmp_path.glob("bode_*.csv")
        assert path.read_text().splitlines()[0] == "omega_rad_s,magnitude_db,phase_deg"
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        mid = (data[:, 0] >= 1e-2) & (data[:, 0] <= 1e2)
        assert np.polyfit(np.log10(data[mid, 0]), data[mid, 1], 1)[0] == pytest.approx(10, abs=0.5)

    def test_bode_bad_band(self):
        assert main(["bode", "--alpha", "0.5", "--band", "10", "1"]) == 1


class TestCompare:
    def test_mismatched_scenarios(self, tmp_path):
        assert main(["compare", str(CONFIGS / "vdc450.yaml"), str(CONFIGS / "vdc600.yaml"),
                     "--out-dir", str(tmp_path)]) == 1

    def test_table(self, tmp_path, capsys):
        a = tmp_path / "a.yaml"
        a.write_text("controller: {kind: fopi}\n")
        code = main(["compare", "--config", str(CONFIGS / "vdc450.yaml"), str(a),
                     str(CONFIGS / "fofpi.yaml"), "--out-dir", str(tmp_path),
                     "--set", "scenario.duration=0.2"])
        assert code == 0
        out = capsys.readouterr().out
        assert "A:FOPI" in out and "B:FOFPI" in out and "winner" in out
