import csv
import math
import subprocess
import sys

import numpy as np
import pytest

from ehsstune.cli import load_spec, main
from ehsstune.errors import ConfigError
from ehsstune.sim import SimLog, objective, total_variation

pytestmark = pytest.mark.usefixtures("compiled")


def write(path, text):
    path.write_text(text)
    return str(path)


def summary(path):
    out = {}
    for line in path.read_text().splitlines():
        k, v = line.split(" = ", 1)
        out[k] = v
    return out


@pytest.fixture
def short_spec(tmp_path):
    return write(tmp_path / "s.ini", "[experiment]\nname = quick\n"
                 "controllers = backstepping-tuned, smc, backstepping-tuned\n"
                 "[sim]\nhorizon = 1\n")


def test_help_lists_verbs_and_defaults(capsys):
    with pytest.raises(SystemExit) as ex:
        main(["--help"])
    assert ex.value.code == 0
    text = capsys.readouterr().out
    for verb in ("run", "tune", "compare"):
        assert verb in text
    with pytest.raises(SystemExit):
        main(["tune", "--help"])
    text = capsys.readouterr().out
    assert "--seeds" in text and "--spec" in text and "--out" in text and "--seed" in text
    assert "100 generations" in text


def test_console_script_module():
    res = subprocess.run([sys.executable, "-m", "ehsstune.cli", "run", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "--plot" in res.stdout


def test_empty_spec_is_default(tmp_path):
    spec = load_spec(write(tmp_path / "e.ini", ""))
    assert spec.reference.kind == "step" and spec.reference.amplitude == 0.2
    assert spec.sim.horizon == 20.0 and spec.sim.sample_dt == 0.01
    cfg = spec.controller_config("backstepping-tuned")
    assert cfg.lam == 13.5585 and cfg.gamma6 == 1e-10 and cfg.F_max == 10.0
    assert spec.plant.d_const == 0.1


def test_run_artifacts(tmp_path, short_spec):
    out = tmp_path / "out"
    assert main(["run", "--spec", short_spec, "--out", str(out)]) == 0
    for suffix in ("_log.csv", "_summary.txt", "_tracking.dat", "_control.dat"):
        f = out / f"quick{suffix}"
        assert f.exists() and f.stat().st_size > 0
    s = summary(out / "quick_summary.txt")
    assert s["diverged"] == "False"
    assert float(s["ultimate_bound"]) > 0
    # metrics recomputed from the CSV match the summary to every written digit
    log = SimLog.from_csv(out / "quick_log.csv")
    assert f"{objective(log):.17g}" == s["objective"]
    assert f"{total_variation(log.u):.17g}" == s["control_total_variation"]
    tail = np.abs(log.e1[int(math.floor(0.75 * (len(log) - 1))):]).max()
    assert f"{tail:.17g}" == s["max_abs_e1_last_25pct"]
    track = np.loadtxt(out / "quick_tracking.dat")
    assert track.shape == (101, 3)


def test_run_reproducible(tmp_path, short_spec):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--spec", short_spec, "--out", str(a), "--seed", "4"])
    main(["run", "--spec", short_spec, "--out", str(b), "--seed", "4"])
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_run_divergence_exit(tmp_path):
    spec = write(tmp_path / "d.ini", "[experiment]\nname = bad\n[controller]\nlaw = printed\n"
                 "[sim]\nhorizon = 1\n")
    assert main(["run", "--spec", spec, "--out", str(tmp_path / "o")]) == 3
    s = summary(tmp_path / "o" / "bad_summary.txt")
    assert s["diverged"] == "True"


def test_missing_spec(tmp_path, capsys):
    path = str(tmp_path / "nope.ini")
    assert main(["run", "--spec", path]) == 2
    assert path in capsys.readouterr().err


@pytest.mark.parametrize("text,line", [
    ("[plant]\nB = fast\n", 2),
    ("[sim]\nhorizon = 1\nbogus = 3\n", 3),
    ("[nosuch]\nx = 1\n", 1),
    ("[experiment]\nname = a\n\n[tuned]\nlam = -2\n", 4),
    ("[experiment]\ncontroller = pid\n", 1),
    ("[sim]\nhorizon = 1\nsample_dt = 0.03\n", 1),
    ("[sim]\nhorizon = 1\nhorizon = 2\n", 3),
])
def test_config_errors_have_lines(tmp_path, capsys, text, line):
    spec = write(tmp_path / "bad.ini", text)
    with pytest.raises(ConfigError) as err:
        load_spec(spec)
    assert err.value.line == line
    assert main(["run", "--spec", spec, "--out", str(tmp_path / "o")]) == 2
    assert f"bad.ini:{line}:" in capsys.readouterr().err


def test_compare_outputs(tmp_path, short_spec):
    out = tmp_path / "c"
    assert main(["compare", "--spec", short_spec, "--out", str(out)]) == 0
    with open(out / "quick_compare.csv") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    assert head[:2] == ["t", "r"]
    assert "xi1_backstepping-tuned_2" in head and "u_smc" in head
    data = np.array(rows[1:], dtype=float)
    a = data[:, head.index("xi1_backstepping-tuned")]
    b = data[:, head.index("xi1_backstepping-tuned_2")]
    assert np.array_equal(a, b)
    with open(out / "quick_metrics.csv") as fh:
        metrics = {r["controller"]: r for r in csv.DictReader(fh)}
    assert float(metrics["smc"]["control_total_variation"]) > float(
        metrics["backstepping-tuned"]["control_total_variation"])


def test_compare_records_divergence(tmp_path):
    spec = write(tmp_path / "s.ini", "[experiment]\nname = mix\ncontrollers = smc, "
                 "backstepping\n[controller]\nlaw = printed\n[sim]\nhorizon = 1\n")
    assert main(["compare", "--spec", spec, "--out", str(tmp_path / "o")]) == 0
    with open(tmp_path / "o" / "mix_metrics.csv") as fh:
        metrics = {r["controller"]: r for r in csv.DictReader(fh)}
    assert metrics["backstepping"]["diverged"] == "true"
    assert metrics["smc"]["diverged"] == "false"


def test_compare_needs_two(tmp_path):
    spec = write(tmp_path / "s.ini", "[experiment]\ncontrollers = smc\n")
    assert main(["compare", "--spec", spec, "--out", str(tmp_path / "o")]) == 2


def test_tune_single_seed_and_point_box(tmp_path, capsys):
    spec = write(tmp_path / "t.ini", "[experiment]\nname = pt\n[abc]\ncolony_size = 4\n"
                 "generations = 2\nhorizon = 0.2\nlam_min = 12\nlam_max = 12\n"
                 "log10_gamma_min = -9\nlog10_gamma_max = -9\n")
    assert main(["tune", "--spec", spec, "--out", str(tmp_path / "o"), "--seeds", "1",
                 "--seed", "5"]) == 0
    with open(tmp_path / "o" / "pt_campaign.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and rows[0]["seed"] == "5"
    assert float(rows[0]["best_lambda"]) == 12.0
    assert float(rows[0]["best_gamma1"]) == pytest.approx(1e-9, rel=1e-15)
    assert (tmp_path / "o" / "pt_abc_seed5.csv").exists()
    assert "spread" in capsys.readouterr().out


def test_tune_all_diverged(tmp_path):
    spec = write(tmp_path / "t.ini", "[experiment]\nname = dv\n[controller]\nlaw = printed\n"
                 "[abc]\ncolony_size = 4\ngenerations = 1\nhorizon = 1\n")
    assert main(["tune", "--spec", spec, "--out", str(tmp_path / "o"), "--seeds", "1"]) == 3


def test_plot_flag(tmp_path, short_spec):
    pytest.importorskip("matplotlib")
    assert main(["run", "--spec", short_spec, "--out", str(tmp_path), "--plot"]) == 0
    assert (tmp_path / "quick_run.png").stat().st_size > 0
