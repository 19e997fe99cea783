import math
from pathlib import Path

import numpy as np
import pytest

import clustermatch as cm

DATA = Path(__file__).resolve().parents[2] / "tests" / "data" / "six_units.csv"


def three_units():
    # Treated at z = 0.10 and 0.20, control at 0.14; one unit per cluster.
    z = np.array([[0.10], [0.20], [0.14]])
    return cm.make_dataset(["a", "b", "c"], [1, 1, 0], [2.0, 4.0, 1.0], np.zeros((3, 0)), z)


def test_three_unit_estimates():
    ds = three_units()
    ate = cm.estimate(ds, m=1, match_on="cluster", bias_correct="none", reps=50, seed=3)
    assert ate["tau_mat"] == pytest.approx(5.0 / 3.0, abs=1e-14)
    assert ate["tau"] == ate["tau_mat"]
    assert ate["estimand"] == "ATE"
    att = cm.estimate(ds, estimand="att", m=1, match_on="cluster", bias_correct="none", reps=50)
    assert att["tau_mat"] == pytest.approx(2.0, abs=1e-14)


def test_match_counts():
    m = cm.match(three_units(), m=1, match_on="cluster")
    assert m.k_counts == [1, 0, 2]
    assert sum(m.k_weight) == pytest.approx(3.0)


def test_csv_fixture_and_balance():
    ds = cm.read_csv(str(DATA), "y", "treated", "site", ["x"], ["z"])
    assert (ds.n_units, ds.n_clusters, ds.n_treated) == (6, 3, 4)
    plain = cm.balance(ds)
    assert [r["covariate"] for r in plain] == ["x", "z"]
    assert "smd_adjusted" not in plain[0]
    adjusted = cm.balance(ds, cm.match(ds, m=1, match_on="cluster"))
    assert adjusted[0]["smd_unadjusted"] == pytest.approx(1 / math.sqrt(13 / 12))
    assert adjusted[0]["smd_adjusted"] == pytest.approx((5 / 6) / math.sqrt(13 / 12))


def test_estimate_is_deterministic():
    ds = cm.read_csv(str(DATA), "y", "treated", "site", ["x"], ["z"])
    a = cm.estimate(ds, m=1, match_on="cluster", bias_correct="none", reps=200, seed=7, threads=1)
    b = cm.estimate(ds, m=1, match_on="cluster", bias_correct="none", reps=200, seed=7, threads=4)
    assert a["replicates"] == b["replicates"]
    assert a["ci_lo"] <= a["tau"] <= a["ci_hi"]


def test_simulation_helpers():
    assert cm.g_transform(1 / 3) == 1.5
    assert cm.treatment_probability(0.5) == 0.453125
    cells = cm.simulate(clusters=10, cluster_size=10, reps=2, bootstrap_reps=10, degree=1, seed=3)
    assert [c["procedure"] for c in cells] == ["P1", "P2", "P3", "P4"]
    assert all(0.0 <= c["coverage"] <= 1.0 for c in cells)


def test_errors_surface_as_value_errors():
    with pytest.raises(ValueError):
        cm.estimate(three_units(), estimand="nope")
    with pytest.raises(cm.ClusterMatchError):
        cm.treatment_probability(2.0)
    with pytest.raises(cm.ClusterMatchError):
        cm.read_csv(str(DATA), "y", "treated", "site", ["missing"])
