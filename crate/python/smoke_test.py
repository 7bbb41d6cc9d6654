"""Smoke test for the Python bindings.

    pip install ./crates/py
    python python/smoke_test.py
"""

import json
import math
import tempfile

import swarmscale as ss


def main():
    assert ss.dtw([0.0, 1.0, 2.0], [0.0, 2.0]) == 1.0
    assert ss.minmax_map([1.0, 3.0, 2.0], 0.0, 10.0) == [0.0, 10.0, 5.0]
    assert ss.scalability_e(4, 8, 1.0) == 1.0
    assert ss.step_up(5000.0, 5000.0, 0.4) == 0.2
    assert ss.step_down(6000.0, 5000.0, 0.8) == 0.0

    z, theta = ss.self_org_z([1.0] * 100, [2.0] * 100, 1)
    assert z == 50.0 and set(theta) == {0.0}

    ideal, dev = ss.condition_signals("step_up", 0.4, 50.0, 100.0, 10)
    assert ideal == [1.0] * 10 and math.isclose(dev[-1], 1 / 0.6)

    p_ideal = [3.0, 4.0, 5.0, 4.0, 3.0, 4.0, 5.0, 4.0]
    r, p_r = ss.reactivity(p_ideal, p_ideal, "step_down", 0.8, 40.0)
    assert min(p_r) == 3.0 and max(p_r) == 5.0 and r >= 0.0
    a, p_a = ss.adaptability(p_ideal, p_ideal, "step_down", 0.8, 40.0, r)
    assert a == 0.0 and p_a == p_ideal

    try:
        ss.step_up(0.0, 0.0, 1.5)
    except ValueError as e:
        assert "beta" in str(e)
    else:
        raise AssertionError("beta out of range was accepted")

    assert ss.derive_seed(1, "CRW", 1, 0) == 17294900483545353827

    config = ss.ExperimentConfig(
        "[experiment]\nsizes = [1, 2]\nruns_per_cell = 2\nduration_s = 60.0\n",
        ["controller.kind=DPO"],
    )
    assert config.controllers == ["DPO"]
    cum, rate, interference = ss.simulate(config, "DPO", 4, 7)
    assert len(cum) == 6 and cum.kind == "cumulative"
    assert cum.to_interval_rate().values == rate.values
    curve = ss.PerformanceCurve.from_csv("cumulative", cum.to_csv())
    assert curve.values == cum.values

    with tempfile.TemporaryDirectory() as out:
        batch = ss.run_batch(config, out, "smoke")
        report = json.loads(ss.compute_report(batch))
        assert [(s["m_prev"], s["m_cur"]) for s in report["self_org"]] == [(1, 2)]
        assert report["scalability"] == []

    print("python smoke test ok")


if __name__ == "__main__":
    main()
