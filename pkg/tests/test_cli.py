import copy
import json
import math
from pathlib import Path

import pytest

from hypdelay.cli import main, parse_param_path, sweep_rows
from hypdelay.config import ConfigParseError, parse_config, parse_config_dict

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = {
    "version": 1,
    "system": {"n": 1, "ell": 1.0, "channels": [{"v": [{"to": 1.0, "value": 1.0}]}]},
    "measure": {"delay": 0.5, "atoms": [{"theta": -0.5, "matrix": [[0.5]]}]},
}


def scalar(gamma=1.1, k=-0.2, **extra):
    data = copy.deepcopy(MINIMAL)
    data["system"]["channels"][0]["k"] = [{"to": 1.0, "value": k}]
    data["measure"]["atoms"][0]["matrix"] = [[gamma]]
    data.update(extra)
    return data


def write_config(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


class TestParse:
    def test_minimal_defaults(self):
        cfg = parse_config_dict(MINIMAL)
        assert cfg.sim.p == 2.0
        assert cfg.dt == 0.5 / 32
        assert cfg.oracle.cells == 2048 and cfg.oracle.cfl == 0.9

    def test_negative_length(self):
        data = copy.deepcopy(MINIMAL)
        data["system"]["ell"] = -1
        with pytest.raises(ConfigParseError) as exc:
            parse_config_dict(data)
        assert ("system.ell", "must be > 0") in exc.value.errors

    def test_atom_outside_window(self):
        data = copy.deepcopy(MINIMAL)
        data["measure"]["atoms"][0]["theta"] = 0.1
        with pytest.raises(ConfigParseError) as exc:
            parse_config_dict(data)
        assert ("measure.atoms[0].theta", "must lie in [-r,0]") in exc.value.errors

    def test_unknown_key(self):
        with pytest.raises(ConfigParseError) as exc:
            parse_config_dict({**MINIMAL, "extra": 1})
        assert exc.value.errors[0][0] == "extra"

    def test_type_error_has_path(self):
        data = copy.deepcopy(MINIMAL)
        data["measure"]["delay"] = "soon"
        with pytest.raises(ConfigParseError) as exc:
            parse_config_dict(data)
        assert exc.value.errors[0][0] == "measure.delay"

    def test_malformed_json(self):
        with pytest.raises(ConfigParseError):
            parse_config("{not json")

    def test_wrong_version(self):
        with pytest.raises(ConfigParseError) as exc:
            parse_config_dict({**MINIMAL, "version": 2})
        assert exc.value.errors[0][0] == "version"

    def test_density_aliases(self):
        data = copy.deepcopy(MINIMAL)
        data["measure"]["densities"] = [{"from": -0.5, "to": -0.1, "matrix": [[1.0]], "exp_rate": 0.3}]
        piece = parse_config_dict(data).build_measure().densities[0]
        assert (piece.start, piece.stop, piece.rate) == (-0.5, -0.1, 0.3)

    def test_breakpoints_must_reach_ell(self):
        data = copy.deepcopy(MINIMAL)
        data["system"]["channels"][0]["v"] = [{"to": 0.5, "value": 1.0}]
        with pytest.raises(ConfigParseError) as exc:
            parse_config_dict(data)
        assert exc.value.errors[0][0] == "system.channels[0].v[0].to"

    def test_param_path(self):
        assert parse_param_path("measure.atoms[0].matrix[0][0]") == ["measure", "atoms", 0, "matrix", 0, 0]
        assert parse_param_path("measure.atoms.0.theta") == ["measure", "atoms", 0, "theta"]


class TestCheck:
    def test_point_mass(self, tmp_path, capsys):
        code, out = run_cli(capsys, "check", "--config", write_config(tmp_path, scalar(0.5, 0.0)), "--out", str(tmp_path))
        assert code == 0
        assert json.loads(out.out)["r"] == pytest.approx(0.5)

    def test_stable_example(self, tmp_path, capsys):
        code, out = run_cli(capsys, "check", "--config", str(CONFIGS / "stable_scalar.json"), "--out", str(tmp_path))
        report = json.loads((tmp_path / "report.json").read_text())
        assert code == 0 and report["verdict"] == "stable"
        assert report["r"] == pytest.approx(0.900604, abs=1e-6)
        assert report["rightmost_root"]["re"] == pytest.approx(-0.069793, abs=1e-6)

    def test_density(self, tmp_path, capsys):
        data = scalar(k=0.0)
        data["measure"] = {"delay": 0.5, "densities": [{"from": -0.5, "to": 0.0, "matrix": [[1.5]]}]}
        code, out = run_cli(capsys, "check", "--config", write_config(tmp_path, data), "--out", str(tmp_path))
        assert code == 0 and json.loads(out.out)["r"] == pytest.approx(0.75)

    def test_unstable(self, tmp_path, capsys):
        code, _ = run_cli(capsys, "check", "--config", str(CONFIGS / "unstable_scalar.json"), "--out", str(tmp_path))
        assert code == 2

    def test_marginal(self, tmp_path, capsys):
        code, _ = run_cli(capsys, "check", "--config", write_config(tmp_path, scalar(math.exp(0.2))), "--out", str(tmp_path))
        assert code == 3

    def test_indeterminate(self, tmp_path, capsys):
        code, out = run_cli(capsys, "check", "--config", write_config(tmp_path, scalar(-0.5)), "--out", str(tmp_path))
        assert code == 3 and json.loads(out.out)["verdict"] == "indeterminate"

    def test_config_error(self, tmp_path, capsys):
        data = copy.deepcopy(MINIMAL)
        data["system"]["ell"] = -1
        code, out = run_cli(capsys, "check", "--config", write_config(tmp_path, data))
        assert code == 1 and "system.ell" in out.err

    def test_missing_file(self, tmp_path, capsys):
        code, _ = run_cli(capsys, "check", "--config", str(tmp_path / "absent.json"))
        assert code == 1


class TestSimulate:
    HEADER = "t,norm_state,norm_history,norm_total,x_1,u_1"

    def test_neutral_loop_csv(self, tmp_path, capsys):
        data = scalar(1.0, 0.0, sim={"dt": 1 / 64, "t_end": 5.0, "snapshot_times": [2.5]})
        code, _ = run_cli(capsys, "simulate", "--config", write_config(tmp_path, data), "--out", str(tmp_path))
        lines = (tmp_path / "trajectory.csv").read_text().splitlines()
        assert code == 0 and lines[0] == self.HEADER
        assert len(lines) == 1 + 321
        assert all(float(row.split(",")[4]) == 1.0 for row in lines[1:])
        snap = (tmp_path / "snapshot_t2.5.csv").read_text().splitlines()
        assert snap[0] == "x,z_1" and len(snap) == 258

    def test_stable_csv(self, tmp_path, capsys):
        code, _ = run_cli(capsys, "simulate", "--config", str(CONFIGS / "stable_scalar.json"), "--out", str(tmp_path))
        assert code == 0
        assert (tmp_path / "trajectory.csv").read_text().startswith(self.HEADER + "\n")
        assert sorted(p.name for p in tmp_path.glob("snapshot_*.csv")) == [
            "snapshot_t1.0.csv", "snapshot_t10.0.csv", "snapshot_t5.0.csv"
        ]

    def test_zero_measure_header(self, tmp_path, capsys):
        code, _ = run_cli(capsys, "simulate", "--config", str(CONFIGS / "zero_measure.json"), "--out", str(tmp_path))
        header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
        assert code == 0 and header == "t,norm_state,norm_history,norm_total,x_1,x_2,u_1,u_2"

    def test_atom_at_zero_is_error(self, tmp_path, capsys):
        data = scalar()
        data["measure"]["atoms"].append({"theta": 0.0, "matrix": [[0.1]]})
        code, out = run_cli(capsys, "simulate", "--config", write_config(tmp_path, data), "--out", str(tmp_path))
        assert code == 1 and "theta=0" in out.err


class TestSpectrum:
    def test_three_roots(self, tmp_path, capsys):
        data = scalar(spectral={"rect": [-0.2, 0.1, -5.0, 5.0]})
        code, out = run_cli(capsys, "spectrum", "--config", write_config(tmp_path, data), "--out", str(tmp_path))
        rows = (tmp_path / "roots.csv").read_text().splitlines()
        assert code == 0 and rows[0] == "re,im,method" and len(rows) == 4
        ims = [float(r.split(",")[1]) for r in rows[1:]]
        assert ims == pytest.approx([-4.18879, 0.0, 4.18879], abs=1e-5)


class TestSweep:
    def test_gamma_regions(self, tmp_path, capsys):
        values = f"0.8,{math.exp(0.2)!r},1.3"
        path = write_config(tmp_path, scalar())
        code, out = run_cli(
            capsys, "sweep", "--config", path, "--out", str(tmp_path),
            "--param", "measure.atoms[0].matrix[0][0]", "--values", values,
        )
        rows = (tmp_path / "sweep.csv").read_text().splitlines()
        assert code == 0 and rows[0] == "measure.atoms[0].matrix[0][0],r,lower,upper,verdict"
        assert [r.rsplit(",", 1)[1] for r in rows[1:]] == ["stable", "marginal", "unstable"]

    def test_rate_regions(self):
        # ‖Λ‖ = 1.9 < 1/r on [-0.5, 0]: stable for ϑ = 0 and for ϑ > 0, unstable once ϑ ≪ 0
        data = scalar(k=0.0)
        data["measure"] = {"delay": 0.5, "densities": [{"from": -0.5, "to": 0.0, "matrix": [[1.9]], "exp_rate": 0.0}]}
        _, rows = sweep_rows(data, [("measure.densities[0].exp_rate", [-1.0, 0.0, 1.0])])
        verdicts = [row[-1] for row in rows]
        rs = [row[1] for row in rows]
        assert verdicts == ["unstable", "stable", "stable"]
        assert rs[1] == pytest.approx(0.95)
        assert rs[0] == pytest.approx(1.9 * (math.e**0.5 - 1))

    def test_empty_values(self, tmp_path, capsys):
        code, out = run_cli(
            capsys, "sweep", "--config", write_config(tmp_path, scalar()), "--out", str(tmp_path),
            "--param", "measure.delay", "--values", "",
        )
        assert code == 0 and out.out == "measure.delay,r,lower,upper,verdict\n"

    def test_two_dimensional_grid_order(self):
        header, rows = sweep_rows(scalar(), [("measure.atoms[0].matrix[0][0]", [0.5, 1.5]), ("measure.delay", [0.5, 1.0])])
        assert header[:2] == ["measure.atoms[0].matrix[0][0]", "measure.delay"]
        assert [tuple(r[:2]) for r in rows] == [(0.5, 0.5), (0.5, 1.0), (1.5, 0.5), (1.5, 1.0)]

    def test_threads_do_not_change_output(self):
        params = [("measure.atoms[0].matrix[0][0]", [0.1 * j for j in range(1, 13)])]
        assert sweep_rows(scalar(), params, 1) == sweep_rows(scalar(), params, 4)

    def test_bad_path_is_error(self, tmp_path, capsys):
        code, _ = run_cli(
            capsys, "sweep", "--config", write_config(tmp_path, scalar()), "--out", str(tmp_path),
            "--param", "measure.atoms[3].theta", "--values", "0.1",
        )
        assert code == 1


class TestVerify:
    def _checks(self, tmp_path):
        result = json.loads((tmp_path / "verify.json").read_text())
        return result, {c["name"]: c for c in result["checks"]}

    def test_stable_passes(self, tmp_path, capsys):
        code, _ = run_cli(capsys, "verify", "--config", str(CONFIGS / "stable_scalar.json"), "--out", str(tmp_path))
        result, checks = self._checks(tmp_path)
        assert code == 0 and result["passed"]
        assert checks["transfer_at_zero"]["status"] == "pass"
        assert checks["criterion_vs_root"]["status"] == "pass"
        assert checks["oracle_agreement"]["status"] == "pass"
        assert checks["decay_vs_root"]["status"] == "pass"

    def test_displayed_exponent_fails(self, tmp_path, capsys):
        data = json.loads((CONFIGS / "stable_scalar.json").read_text())
        data["sim"]["exponent"] = "foot"
        code, _ = run_cli(capsys, "verify", "--config", write_config(tmp_path, data), "--out", str(tmp_path))
        _, checks = self._checks(tmp_path)
        assert code == 2 and checks["oracle_agreement"]["status"] == "fail"

    def test_zero_measure_nilpotent(self, tmp_path, capsys):
        code, _ = run_cli(capsys, "verify", "--config", str(CONFIGS / "zero_measure.json"), "--out", str(tmp_path))
        _, checks = self._checks(tmp_path)
        assert code == 0 and checks["nilpotency"]["status"] == "pass"


@pytest.mark.parametrize("command", ["check", "simulate", "spectrum"])
def test_deterministic_output(tmp_path, capsys, command):
    data = scalar(sim={"dt": 1 / 128, "t_end": 6.0, "snapshot_times": [1.0]}, spectral={"rect": [-0.2, 0.1, -5.0, 5.0]})
    cfg = write_config(tmp_path, data)
    outputs = []
    for run in ("a", "b"):
        assert main([command, "--config", cfg, "--out", str(tmp_path / run)]) in (0, 2, 3)
        outputs.append({p.name: p.read_bytes() for p in sorted((tmp_path / run).iterdir())})
    capsys.readouterr()
    assert outputs[0] == outputs[1] and outputs[0]
