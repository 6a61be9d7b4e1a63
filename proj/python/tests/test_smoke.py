import json

import numpy as np
import pytest

sr = pytest.importorskip("splitrank")

SMALL = {"n": 1200, "k": 5, "seed": 3}


def test_simulate_shapes_and_truth():
    s = sr.simulate(SMALL)
    assert s["x"].shape == (1200, 5)
    assert set(np.unique(s["true_cate"])) == {10.0, 20.0, 30.0, 40.0}
    np.testing.assert_allclose(s["y1"] - s["y0"], s["true_cate"])
    again = sr.simulate(SMALL)
    assert np.array_equal(s["y"], again["y"])


def test_weights_fit_rank():
    s = sr.simulate(SMALL)
    w = sr.compute_weights(s["x"], s["a"])
    assert abs(w["mean_weight_treated"] - 1) < 0.05
    keep = np.asarray(w["retained"])
    m = sr.fit_outcome_model(s["x"][keep], s["a"][keep], s["y"][keep], weights=w["weights"])
    ite = sr.compute_ite(m, s["x"])["ite"]
    ranked = sr.rank_and_bucket(ite, 4)
    assert sorted(ranked["rank"]) == list(range(1, 1201))
    assert sr.rank_rmse(ranked["level"], s["truth_levels"]) < 0.6

    back = sr.OutcomeModel.from_json(m.to_json())
    np.testing.assert_array_equal(back.predict(s["x"], s["a"]), m.predict(s["x"], s["a"]))


def test_unit_weights_match_unweighted():
    s = sr.simulate(SMALL)
    m0 = sr.fit_outcome_model(s["x"], s["a"], s["y"])
    m1 = sr.fit_outcome_model(s["x"], s["a"], s["y"], weights=np.ones(len(s["y"])))
    assert json.loads(m0.to_json()) == json.loads(m1.to_json())


def test_overlap_and_confounder():
    v = np.arange(10.0)
    assert sr.overlap_fraction(v, v) == 1.0
    assert sr.overlap_fraction(v, -v) == 0.0
    s = sr.simulate(SMALL)
    c = sr.generate_confounder(s["x"], s["a"], s["y"], {"alpha": 1e5, "epsilon": 4e6})
    assert c["corr_u_a"] > 0.1


def test_wald_perfect_compliance():
    rng = np.random.default_rng(0)
    z = rng.integers(0, 2, 2000)
    y = rng.normal(size=2000) + 3 * z
    w = sr.wald_2sls(z.astype(float), y, z)
    assert w["first_stage"] == 1.0
    assert w["cate"] == pytest.approx(y[z == 1].mean() - y[z == 0].mean())


def test_errors_map_to_python_exceptions():
    with pytest.raises(sr.ConfigError):
        sr.config_hash({"models": []})
    with pytest.raises(ValueError):
        sr.fit_outcome_model(np.zeros((3, 1)), np.ones(3), np.ones(3), weights=np.zeros(3))
    with pytest.raises(sr.EstimationError):
        sr.wald_2sls(np.zeros(200), np.zeros(200), [0, 1] * 100)


def test_run_pipeline_small(tmp_path):
    cfg = {
        "seed": 2,
        "sim": {"n": 1500, "k": 5},
        "sensitivity": {"runs": 1, "bootstrap_resamples": 20},
        "validation": {"campaign_n": 4000},
    }
    report = sr.run_pipeline(cfg, tmp_path)
    assert report["config_hash"] == sr.config_hash(cfg)
    assert len(report["models"]) == 2
    assert (tmp_path / "manifest.json").exists()
    assert len(json.loads((tmp_path / "manifest.json").read_text())["files"]) == 7
