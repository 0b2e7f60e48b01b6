"""Smoke test for the nearfar_py extension.

Build and install first:
    pip install --no-build-isolation ./crates/python
then run:
    python python/smoke_test.py
"""

import math
import os
import tempfile

import nearfar_py as nf


def main():
    assert abs(nf.are(0.5, 0.6) - 1.44) < 1e-12
    assert abs(nf.are(0.4, 0.7) - 3.0625) < 1e-12

    cohort = nf.Cohort.sin_log_sin(200, beta=0.5, xi=1.0, seed=4)
    assert len(cohort) == 200 and cohort.covariate_names == ["x1", "x2", "x3"]

    m0 = nf.strengthen(cohort, {"encouragement": "higher_dose"})
    m1 = nf.strengthen(cohort, {"encouragement": "higher_dose", "caliper_lambda": 1.0, "sinks": 100})
    assert len(m0) == 100 and len(m1) <= 50
    assert m1.compliance > m0.compliance

    with tempfile.TemporaryDirectory() as tmp:
        cohort.write_csv(os.path.join(tmp, "cohort.csv"))
        again = nf.Cohort.read_csv(os.path.join(tmp, "cohort.csv"))
        assert again.outcomes() == cohort.outcomes()
        m1.write_csv(os.path.join(tmp, "design.csv"), cohort)
        assert nf.Design.read_csv(os.path.join(tmp, "design.csv"), cohort).pairs == m1.pairs

    wald = nf.wald_estimate(m1, cohort, sigma=1.0)
    lo, hi = nf.confidence_interval(m1, cohort)
    assert lo < wald["beta_hat"] < hi
    p = nf.test(m1, cohort, beta0=wald["beta_hat"])["p_value"]
    assert 0.0 <= p <= 1.0

    ratio = nf.bias_ratio(m0, m1, cohort, cohort.latent_u())
    assert ratio["delta_ratio"] >= 0.0

    pooled = nf.rubin_pool([1.0, 2.0, 3.0], [1.0, 1.0, 1.0])
    assert math.isclose(pooled["dof"], 2.0 * (1.0 + 1.0 / (4.0 / 3.0)) ** 2)

    zone = {"delta_set": [-0.2, 0.0, 0.2], "tau_set": [0.01], "lambda1_set": [1.0]}
    si = nf.sensitivity_interval(m1, cohort, zone, {"k": 10, "seed": 1})
    assert si["lower"] <= si["upper"]

    outcome, design = nf.two_step_debias(
        cohort, {"target": {"k": 1.3}, "time_budget": 5.0}, {"encouragement": "higher_dose"}
    )
    assert outcome["violations"] == [] and len(design) > 0

    try:
        nf.are(1.5, 0.6)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid iota accepted")

    assert nf.preset_config("table2")["reps"] == 2000
    print("nearfar_py smoke test passed")


if __name__ == "__main__":
    main()
