import json
import time

import numpy as np
import pytest

from stratify import cli
from stratify.dataset import edx_schema

EDX_HEADER = ("age,gender,country,viewed,explored,ndays_act,nevents,nplay_video,"
              "nchapters,nforum_posts,certified")


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth -> ingest once; later tests reuse the cleaned data."""
    root = tmp_path_factory.mktemp("flow")
    synth_dir = root / "synth"
    assert run_cli("synth", "--profile", "separated2", "--n", 900, "--seed", 3,
                   "--out", synth_dir) == 0
    ingest_dir = root / "ingest"
    assert run_cli("ingest", "--data", synth_dir / "synth_cohort.csv",
                   "--out", ingest_dir) == 0
    return root


def test_synth_writes_cohort_with_true_pattern(workspace):
    path = workspace / "synth" / "synth_cohort.csv"
    header = path.read_text().splitlines()[0]
    assert header == EDX_HEADER + ",true_pattern"
    manifest = json.loads((workspace / "synth" / "manifest.json").read_text())
    assert "synth_cohort.csv" in manifest["artifacts"]


def test_ingest_artifacts(workspace):
    ingest_dir = workspace / "ingest"
    assert (ingest_dir / "clean.csv").exists()
    assert (ingest_dir / "preprocess.json").exists()
    lines = (ingest_dir / "clean.csv").read_text().splitlines()
    assert len(lines) == 901


def test_ingest_missing_column_exits_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("age,gender\n30,m\n")
    assert run_cli("ingest", "--data", bad, "--out", tmp_path / "out") == 2


def test_ingest_missing_file_exits_2(tmp_path):
    assert run_cli("ingest", "--data", tmp_path / "nope.csv", "--out", tmp_path / "o") == 2


def test_cluster_default_range_and_fixed(workspace, tmp_path):
    clean = workspace / "ingest" / "clean.csv"
    out = tmp_path / "cluster"
    assert run_cli("cluster", "--data", clean, "--out", out, "--seed", 1,
                   "--k-max", 5, "--restarts", 4) == 0
    kselect = json.loads((out / "kselect.json").read_text())
    assert kselect["k_range"] == [2, 5]
    assert kselect["winner"] == 2
    for idx, kv in kselect["values"].items():
        assert set(kv) == {"2", "3", "4", "5"}
    patterns = (out / "patterns.csv").read_text().splitlines()
    assert len(patterns) == 901

    fixed = tmp_path / "fixed"
    assert run_cli("cluster", "--data", clean, "--out", fixed, "--seed", 1,
                   "--k-fixed", 3) == 0
    assert not (fixed / "kselect.json").exists()


@pytest.fixture(scope="module")
def run_dir(workspace, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = {
        "seed": 5, "k_fixed": 2, "algorithms": ["GBT", "DT"], "bootstrap_b": 40,
        "kmeans": {"restarts": 3, "max_iter": 80, "tol": 1e-6},
    }
    cfg_path = out / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    code = run_cli("run", "--data", workspace / "ingest" / "clean.csv",
                   "--config", cfg_path, "--out", out / "a")
    assert code == 0
    return out


def test_run_artifacts(run_dir):
    a = run_dir / "a"
    for rel in ("patterns.csv", "comparison.json", "demographics.csv", "run_state.json",
                "manifest.json", "integration/pooled/GBT/metrics.json",
                "integration/pattern0/GBT/roc_points.csv",
                "integration/pattern0/GBT/violin_samples.csv",
                "direct/GBT/metrics.json",
                "direct/separated/pattern0/GBT/metrics.json",
                "models/pattern0/GBT.json", "models/direct/DT.json"):
        assert (a / rel).exists(), rel
    metrics = json.loads((a / "integration/pooled/GBT/metrics.json").read_text())
    assert set(metrics) >= {"confusion", "positive", "weighted", "auc", "flags"}
    comparison = json.loads((a / "comparison.json").read_text())
    assert "GBT" in comparison["overall"]


def test_rerun_reproduces_checksums(workspace, run_dir):
    cfg_path = run_dir / "config.json"
    assert run_cli("run", "--data", workspace / "ingest" / "clean.csv",
                   "--config", cfg_path, "--out", run_dir / "b") == 0
    m_a = json.loads((run_dir / "a" / "manifest.json").read_text())
    m_b = json.loads((run_dir / "b" / "manifest.json").read_text())
    assert m_a["artifacts"] == m_b["artifacts"]


def test_explain_outputs(run_dir):
    assert run_cli("explain", "--run-dir", run_dir / "a", "--pattern", 0,
                   "--n-explain", 12, "--background", 20) == 0
    base = run_dir / "a" / "explain" / "pattern0"
    importance = (base / "importance.csv").read_text().splitlines()
    assert importance[0] == "feature,gain_share,rank"
    assert len(importance) == 8  # seven behavior features
    shap_lines = (base / "shap_values.csv").read_text().splitlines()
    assert shap_lines[0] == "feature,sample,shap_value,feature_value,value_percentile"
    assert len(shap_lines) == 1 + 7 * 12
    shares = sorted(float(r.split(",")[1]) for r in importance[1:])
    assert shares[-1] > 0 and abs(sum(shares) - 1.0) < 1e-9


def test_explain_missing_pattern_exits_2(run_dir):
    assert run_cli("explain", "--run-dir", run_dir / "a", "--pattern", 9) == 2


def test_run_arm_selection(workspace, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 2, "k_fixed": 2, "algorithms": ["DT"],
                               "bootstrap_b": 0}))
    out = tmp_path / "direct_only"
    assert run_cli("run", "--data", workspace / "ingest" / "clean.csv",
                   "--config", cfg, "--arm", "direct", "--out", out) == 0
    assert (out / "direct/DT/metrics.json").exists()
    assert not (out / "comparison.json").exists()
    assert not (out / "integration").exists()


def test_degenerate_pattern_run_exits_3(tmp_path):
    # one cluster is entirely negative: the run completes but flags it
    rng = np.random.default_rng(0)
    rows = []
    for i in range(80):
        far = i < 30
        rows.append([30.0, "m", "C1", 1, int(far), 40 if far else 2, 50 if far else 3,
                     1, 8 if far else 1, 0, 0 if far else int(rng.random() < 0.4)])
    csv_path = tmp_path / "degenerate.csv"
    lines = [EDX_HEADER] + [",".join(map(str, r)) for r in rows]
    csv_path.write_text("\n".join(lines) + "\n")
    ingest = tmp_path / "ing"
    assert run_cli("ingest", "--data", csv_path, "--out", ingest) == 0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 0, "k_fixed": 2, "algorithms": ["DT"],
                               "bootstrap_b": 0}))
    code = run_cli("run", "--data", ingest / "clean.csv", "--config", cfg,
                   "--out", tmp_path / "runout")
    assert code == 3


def test_smoke_run_all_algorithms_under_60s(tmp_path):
    t0 = time.time()
    synth = tmp_path / "synth"
    assert run_cli("synth", "--profile", "separated2", "--n", 2000, "--seed", 9,
                   "--out", synth) == 0
    ingest = tmp_path / "ingest"
    assert run_cli("ingest", "--data", synth / "synth_cohort.csv", "--out", ingest) == 0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 9, "k_fixed": 2, "bootstrap_b": 100,
                               "kmeans": {"restarts": 3, "max_iter": 100, "tol": 1e-6}}))
    assert run_cli("run", "--data", ingest / "clean.csv", "--config", cfg,
                   "--out", tmp_path / "run") == 0
    assert time.time() - t0 < 60.0


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["--version"])
    assert e.value.code == 0
