"""Smoke test for the rescp Python bindings.

Build and install first:
    pip install --no-build-isolation -e crates/python
"""

import math

import rescp


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    # Weighting and quantiles.
    w, ess = rescp.softmax_weights([0.0, math.log(3.0)], 1.0)
    assert close(w[0], 0.25) and close(w[1], 0.75), w
    assert close(rescp.effective_sample_size([0.25] * 4), 4.0)
    assert rescp.weighted_quantile([3.0, 1.0, 2.0], [1.0, 1.0, 1.0], 0.5) == 2.0
    beta, lo, hi = rescp.beta_star([-1.0, 0.0, 1.0, 5.0], [1, 1, 1, 1], 0.5)
    assert lo <= hi and 0.0 <= beta <= 0.5

    # Reservoir states feeding a calibration store.
    res = rescp.Reservoir(input_dim=1, size=32, spectral_radius=0.9, seed=1)
    assert abs(res.spectral_radius() - 0.9) < 1e-6
    series = rescp.generate("regime_switch", length=400, seed=3)
    y = series["y"]
    states = res.encode([[v] for v in y])
    assert len(states) == len(y) and len(states[0]) == 32

    store = rescp.CalibrationStore(horizon=1, capacity=200)
    for t in range(1, 300):
        store.push(t - 1, states[t - 1], y[t] - 0.8 * y[t - 1])
    assert len(store) == 200
    t = 300
    pi = rescp.rescp_interval(states[t - 1], t - 1, 0.8 * y[t - 1], store, alpha=0.1, temperature=0.1)
    assert pi.lower < pi.upper and 1.0 <= pi.ess <= 200.0, pi
    scp = rescp.scp_interval(store.residuals(), 0.0, 0.1)
    nex = rescp.nexcp_interval(store.residuals(), store.times(), t - 1, 0.0, 0.1, 0.99)
    assert scp.width() > 0 and nex.width() > 0
    assert rescp.winkler_score(rescp.Interval(-1.0, 1.0, 0.1), 0.0) == 2.0
    assert rescp.pinball_loss(0.0, 1.0, 0.9) > rescp.pinball_loss(0.0, -1.0, 0.9)

    # Quantile readout.
    readout = rescp.QuantileReadout.fit(states[:300], [v for v in y[:300]], alpha=0.1, epochs=20)
    q = readout.predict(states[300])
    assert all(a <= b for a, b in zip(q, q[1:]))

    # Errors surface as RescpError.
    try:
        rescp.scp_interval([], 0.0, 0.1)
    except rescp.RescpError:
        pass
    else:
        raise AssertionError("expected RescpError")

    # Full experiment.
    config = """
method = "rescp"
seeds = [0, 1]
[data]
source = "synthetic"
kind = "regime_switch_hetero"
a = 0.8
sigma_lo = 0.2
sigma_hi = 2.0
period = 250
length = 2000
[reservoir]
size = 64
"""
    out = rescp.run_experiment(config, include_steps=True)
    assert out["aggregate"]["runs"] == 2
    assert len(out["runs"][0]["steps"]) == out["runs"][0]["report"]["n_test"]
    coverage = out["aggregate"]["coverage"]["mean"]
    assert 0.7 < coverage <= 1.0, coverage
    print(f"smoke test passed (coverage {coverage:.3f})")


if __name__ == "__main__":
    main()
