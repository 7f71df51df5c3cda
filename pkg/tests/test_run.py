"""
End-to-end tests of the command-line launcher.
"""

import json
import math

import pytest

import run

OU_U10 = math.sqrt(2.0 / math.pi) * math.sqrt(10.0) * math.exp(-5.0)


@pytest.fixture
def cli(tmp_path, capsys):
    """Run the launcher quietly into tmp_path; returns (exit code, stdout)."""
    def invoke(*args):
        argv = ["--quiet", *args]
        if args[0] != "replay":
            argv += ["--output-dir", str(tmp_path)]
        code = run.main(argv)
        return code, capsys.readouterr().out
    return invoke


class TestCommands:
    def test_approx(self, cli):
        code, out = cli("approx", "--model", "ou:1", "--u", "10")
        assert code == 0
        payload = json.loads(out)
        assert payload["approximation"]["value"] == pytest.approx(OU_U10, rel=1e-7)
        assert "closed_form" not in payload

    def test_approx_reports_closed_form(self, cli):
        code, out = cli("approx", "--model", "bridge", "--trend", "gnu:1", "--u", "12")
        assert code == 0
        assert json.loads(out)["closed_form"]["ratio"] == pytest.approx(1.0, rel=1e-6)

    def test_admissible_not_applicable_exits_2(self, cli):
        code, out = cli("admissible", "--model", "bridge", "--trend", "gnu:0.7")
        assert code == 2
        assert json.loads(out)["overall"] == "not-applicable"

    def test_admissible_inconclusive_exits_2(self, cli):
        code, out = cli("admissible", "--c", "1/(2*t*(1-t))", "--alpha", "1", "--trend", "gnu:1")
        assert code == 2
        assert json.loads(out)["overall"] == "inconclusive"

    def test_critical(self, cli):
        code, out = cli("critical", "--model", "ou:1", "--p", str(OU_U10))
        assert code == 0
        assert json.loads(out)["u"] == pytest.approx(10.0, rel=1e-6)

    def test_gof_from_file(self, cli, tmp_path):
        sample = tmp_path / "sample.txt"
        sample.write_text("\n".join(str((i + 0.5) / 20) for i in range(20)))
        code, out = cli("gof", "--input", str(sample))
        assert code == 0
        payload = json.loads(out)
        assert payload["n"] == 20
        assert 0.0 < payload["p_value"] <= 1.0

    def test_compare_writes_csv(self, cli, tmp_path):
        code, out = cli("compare", "--model", "ou:1", "--u", "6,8", "--paths", "10000", "--seed", "1",
                        "--threads", "1")
        assert code == 0
        assert out.splitlines()[0].startswith("u,asymptotic,p_hat")
        assert list(tmp_path.glob("compare_*.csv"))


class TestErrors:
    def test_bad_expression_exits_1(self, cli):
        code, out = cli("approx", "--c", "1/(2*", "--alpha", "1", "--u", "10")
        assert code == 1
        assert json.loads(out)["error"] == "InputError"

    def test_randomized_command_needs_seed(self, cli):
        code, out = cli("mc", "--model", "ou:1", "--u", "10")
        assert code == 1
        assert out == ""

    def test_bad_weights(self, cli):
        code, _ = cli("approx", "--model", "bridge", "--b", "0.5,1", "--u", "10")
        assert code == 1
        code, _ = cli("approx", "--model", "bridge", "--b", " , ", "--u", "10")
        assert code == 1

    @pytest.mark.parametrize("argv", [
        ["approx", "--model", "ou:1"],
        ["approx", "--model", "ou:1", "--u", "10", "--colour", "red"],
        ["gof", "--input", "x.txt", "--method", "spline"],
        ["frobnicate"],
    ])
    def test_usage_errors_exit_1(self, argv, capsys):
        with pytest.raises(SystemExit) as info:
            run.main(["--quiet", *argv])
        assert info.value.code == 1
        out = capsys.readouterr()
        assert out.out == ""
        assert "usage:" in out.err


class TestReplay:
    def test_manifest_reproduces_output(self, cli, tmp_path):
        code, first = cli("approx", "--model", "ou:1", "--u", "10")
        assert code == 0
        manifests = list(tmp_path.glob("approx_*.manifest.json"))
        assert len(manifests) == 1
        manifest = json.loads(manifests[0].read_text())
        assert manifest["config"]["model"] == "ou:1"
        assert isinstance(manifest["metrics"], dict)
        code, second = cli("replay", str(manifests[0]))
        assert code == 0
        assert second == first

    def test_missing_manifest(self, cli, tmp_path):
        code, _ = cli("replay", str(tmp_path / "nope.manifest.json"))
        assert code == 1
