import json

import numpy as np
import pytest

from chigan.cli import main
from chigan.cohort import read_cohort_csv
from chigan.nets import Generator
from chigan.trainer import _GEN_INIT, TrainConfig, TrainedModel, derive_seed, fit_critic, standardize, variational_bound
from chigan.weights import read_weights_csv

TRAIN_FLAGS = ["--max-iters", "400", "--batch-size", "64", "--hidden", "16,16", "--noise-dim", "4"]


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def small_sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out", str(out), "--seed", "3", "--d", "2", "--n-sub", "300"]) == 0
    return out


@pytest.fixture(scope="module")
def small_train(small_sim, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    code = main(["train", "--cohort", str(small_sim / "arm1.csv"), "--cohort", str(small_sim / "arm2.csv"),
                 "--out", str(out), "--seed", "1", *TRAIN_FLAGS])
    assert code == 0
    return out


def test_simulate_defaults(tmp_path):
    assert main(["simulate", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "arm1.csv").read_text().splitlines()
    assert len(lines) == 4001
    assert lines[0] == "unit_id," + ",".join(f"f_{j}" for j in range(10)) + ",subpop_label,outcome"
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["target_ate"] == {"mixture": 50.0, "overlap": 70.0}
    assert set(meta["subpopulations"]) == {"A", "B", "C"}
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["command"] == "simulate" and cfg["seed"] == 0


def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["simulate", "--out", str(d), "--seed", "7", "--d", "3", "--n-sub", "50"]) == 0
    fa, fb = _files(a), _files(b)
    # config.json records the output path, everything else must match exactly
    fa.pop("config.json"), fb.pop("config.json")
    assert fa == fb


def test_simulate_d2(small_sim):
    arm = read_cohort_csv(small_sim / "arm1.csv")
    assert arm.dim == 2 and arm.n == 600


def test_train_outputs(small_train):
    names = {p.name for p in small_train.iterdir()}
    assert {"model.cgan", "trace.csv", "weights_arm1.csv", "weights_arm2.csv", "config.json"} <= names
    cfg = json.loads((small_train / "config.json").read_text())
    assert cfg["train_config"]["max_iters"] == 400 and cfg["iterations_run"] <= 400
    assert len((small_train / "trace.csv").read_text().splitlines()) == cfg["iterations_run"] + 1


def test_train_is_byte_identical(small_sim, small_train, tmp_path):
    code = main(["train", "--cohort", str(small_sim / "arm1.csv"), "--cohort", str(small_sim / "arm2.csv"),
                 "--out", str(tmp_path), "--seed", "1", *TRAIN_FLAGS])
    assert code == 0
    for name in ("model.cgan", "trace.csv", "weights_arm1.csv", "weights_arm2.csv"):
        assert (tmp_path / name).read_bytes() == (small_train / name).read_bytes()


def test_weigh_reproduces_training_weights(small_sim, small_train, tmp_path):
    for k in (1, 2):
        out = tmp_path / f"w{k}.csv"
        code = main(["weigh", "--checkpoint", str(small_train / "model.cgan"),
                     "--cohort", str(small_sim / f"arm{k}.csv"), "--out", str(out)])
        assert code == 0
        assert out.read_bytes() == (small_train / f"weights_arm{k}.csv").read_bytes()
        _, w = read_weights_csv(out)
        assert abs(w.weights.sum() - 1.0) < 1e-12


def test_weigh_errors(small_train, tmp_path):
    empty = tmp_path / "arm1.csv"
    empty.write_text("")
    args = ["weigh", "--checkpoint", str(small_train / "model.cgan"), "--out", str(tmp_path / "w.csv")]
    assert main([*args, "--cohort", str(empty)]) == 3
    wide = tmp_path / "wide.csv"
    wide.write_text("unit_id,f_0,f_1,f_2\na,1,2,3\n")
    assert main([*args, "--cohort", str(wide), "--arm", "arm1"]) == 3
    assert main([*args, "--cohort", str(wide)]) == 2
    bogus = tmp_path / "bogus.cgan"
    bogus.write_text("not a checkpoint")
    assert main(["weigh", "--checkpoint", str(bogus), "--cohort", str(wide), "--out", str(tmp_path / "x.csv")]) == 3


def test_train_errors(small_sim, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("unit_id,f_0,f_1\na,1,2\nb,oops,3\n")
    narrow = tmp_path / "narrow.csv"
    narrow.write_text("unit_id,f_0\na,1\n")
    base = ["train", "--out", str(tmp_path / "o"), *TRAIN_FLAGS]
    assert main([*base, "--cohort", str(small_sim / "arm1.csv"), "--cohort", str(bad)]) == 3
    assert main([*base, "--cohort", str(small_sim / "arm1.csv"), "--cohort", str(narrow)]) == 3
    assert main([*base, "--cohort", str(small_sim / "arm1.csv")]) == 2


def test_train_reports_bad_cell_coordinates(small_sim, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("unit_id,f_0,f_1\na,1,2\nb,oops,3\n")
    main(["train", "--out", str(tmp_path / "o"), "--cohort", str(small_sim / "arm1.csv"), "--cohort", str(bad)])
    assert "row 3, column 'f_0'" in capsys.readouterr().err


def test_schema_mismatch_names_columns(small_sim, tmp_path, capsys):
    narrow = tmp_path / "narrow.csv"
    narrow.write_text("unit_id,f_0\n" + "".join(f"u{i},{i}\n" for i in range(100)))
    code = main(["train", "--out", str(tmp_path / "o"), "--cohort", str(small_sim / "arm1.csv"),
                 "--cohort", str(narrow), *TRAIN_FLAGS])
    assert code == 3
    assert "f_1" in capsys.readouterr().err


def test_missing_outcome_trains(small_sim, tmp_path):
    stripped = []
    for k in (1, 2):
        lines = (small_sim / f"arm{k}.csv").read_text().splitlines()
        p = tmp_path / f"nooutcome{k}.csv"
        p.write_text("\n".join(",".join(ln.split(",")[:3]) for ln in lines) + "\n")
        stripped.append(p)
    code = main(["train", "--cohort", str(stripped[0]), "--cohort", str(stripped[1]),
                 "--out", str(tmp_path / "o"), *TRAIN_FLAGS])
    assert code == 0


def test_numerical_failure_exit_code(small_sim, tmp_path):
    code = main(["train", "--cohort", str(small_sim / "arm1.csv"), "--cohort", str(small_sim / "arm2.csv"),
                 "--out", str(tmp_path), "--lr-disc", "1e300", "--lr-gen", "1e300", *TRAIN_FLAGS])
    assert code == 4


def test_evaluate_methods(small_sim, small_train, tmp_path, capsys):
    cohorts = ["--cohort", str(small_sim / "arm1.csv"), "--cohort", str(small_sim / "arm2.csv")]
    code = main(["evaluate", *cohorts, "--out", str(tmp_path), "--method", "unweighted", "--method", "ipw",
                 "--method", "clipped-ipw", "--method", "cgan", "--checkpoint", str(small_train / "model.cgan")])
    assert code == 0
    effect = (tmp_path / "effect.csv").read_text().splitlines()
    balance = (tmp_path / "balance.csv").read_text().splitlines()
    assert [ln.split(",")[0] for ln in effect[1:]] == ["unweighted", "ipw", "clipped-ipw", "cgan"]
    assert [ln.split(",")[0] for ln in balance[1:]] == ["unweighted", "ipw", "clipped-ipw", "cgan"]
    unweighted = effect[1].split(",")
    assert abs(float(unweighted[1]) - 50.0) < 0.5
    assert float(unweighted[-1]) == 1200.0
    report = (tmp_path / "report.txt").read_text()
    assert report == capsys.readouterr().out
    assert "Weighting Method" in report


def test_evaluate_weights_files(small_sim, small_train, tmp_path):
    cohorts = ["--cohort", str(small_sim / "arm1.csv"), "--cohort", str(small_sim / "arm2.csv")]
    w = ["--weights", str(small_train / "weights_arm1.csv"), "--weights", str(small_train / "weights_arm2.csv")]
    assert main(["evaluate", *cohorts, *w, "--out", str(tmp_path / "a")]) == 0
    assert main(["evaluate", *cohorts, "--method", "cgan", "--checkpoint", str(small_train / "model.cgan"),
                 "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "effect.csv").read_text()
    b = (tmp_path / "b" / "effect.csv").read_text()
    assert a == b
    # weights file shorter than its cohort
    short = tmp_path / "short.csv"
    short.write_text("\n".join((small_train / "weights_arm2.csv").read_text().splitlines()[:10]) + "\n")
    assert main(["evaluate", *cohorts, "--weights", str(small_train / "weights_arm1.csv"),
                 "--weights", str(short), "--out", str(tmp_path / "d")]) == 3


def test_evaluate_usage_errors(small_sim, tmp_path):
    one = ["--cohort", str(small_sim / "arm1.csv")]
    assert main(["evaluate", *one, "--out", str(tmp_path)]) == 2
    both = [*one, "--cohort", str(small_sim / "arm2.csv")]
    assert main(["evaluate", *both, "--method", "cgan", "--out", str(tmp_path)]) == 2


def test_oracle_unknown_suite():
    with pytest.raises(SystemExit) as exc:
        main(["oracle", "nope"])
    assert exc.value.code == 2


def test_oracle_variance_relation(capsys):
    assert main(["oracle", "variance-relation"]) == 0
    assert "[PASS]" in capsys.readouterr().out


def test_training_lowers_the_divergence(small_sim, small_train):
    """Equal-budget fresh critics see a smaller bound for the trained generator than the initial one."""
    arms = [read_cohort_csv(small_sim / f"arm{k}.csv") for k in (1, 2)]
    cfg_json = json.loads((small_train / "config.json").read_text())["train_config"]
    model = TrainedModel.load(small_train / "model.cgan")
    std, _ = standardize(arms)
    hidden = tuple(cfg_json["hidden"])
    initial = Generator.create(cfg_json["noise_dim"], 2, hidden, seed=derive_seed(cfg_json["seed"], _GEN_INIT))
    critic_cfg = TrainConfig(batch_size=128, max_iters=1500, lr_disc=2e-3, hidden=hidden)
    for arm in std:
        bounds = []
        for gen in (initial, model.generator):
            disc, _ = fit_critic(lambda r, n, g=gen: g.sample(n, r), arm.features, critic_cfg)
            bounds.append(variational_bound(disc, gen.sample(20000, np.random.default_rng(0)), arm.features).value)
        assert bounds[1] < bounds[0], bounds
