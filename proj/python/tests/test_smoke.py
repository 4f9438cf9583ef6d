import math

import pytest

import amp_lab


def test_semicircle_cumulants():
    k = amp_lab.free_cumulants("semicircle", 6)
    assert k[1] == pytest.approx(1.0, abs=1e-12)
    assert all(abs(v) <= 1e-12 for i, v in enumerate(k) if i != 1)


def test_marchenko_pastur_cumulants():
    alpha = 0.3
    k = amp_lab.free_cumulants(f"mp:{alpha}", 5)
    for n, v in enumerate(k, start=1):
        assert v == pytest.approx(alpha ** (n - 1), rel=1e-9)


def test_round_trip():
    kappa = [0.3, 1.2, -0.4, 0.7, 0.1]
    back = amp_lab.moments_to_cumulants(amp_lab.cumulants_to_moments(kappa))
    assert max(abs(a - b) for a, b in zip(kappa, back)) <= 1e-12


def test_cumulants_table_header():
    text = amp_lab.cumulants_table("point:2.5", 2)
    assert text == "n,m_n,kappa_n\n1,2.5,2.5\n2,6.25,0\n"


def test_unknown_key_is_rejected():
    with pytest.raises(amp_lab.ValidationError, match="thetta"):
        amp_lab.normalize_config({"thetta": 1.5})
    with pytest.raises(amp_lab.UnsupportedVariant):
        amp_lab.normalize_config({"algo": "ri-amp-df"})


def test_state_evolution_without_spike():
    cfg = {"law": "semicircle", "algo": "ri-amp", "theta": 0.0, "T": 3, "N": 200, "runs": 2,
           "expectation": {"method": "gh", "points": 30}}
    traj = amp_lab.state_evolution(cfg)
    assert len(traj) == 3
    for state in traj:
        assert state["mse"] == pytest.approx(1.0, abs=1e-9)
        assert state["Sigma"].shape == (state["t"], state["t"])


def test_small_run():
    cfg = {"law": "semicircle", "algo": "ri-amp", "theta": 2.0, "T": 3, "N": 200, "runs": 2,
           "expectation": {"method": "gh", "points": 30}}
    out = amp_lab.run(cfg, threads=1)
    assert out["runs_ok"] == 2
    assert [r["t"] for r in out["rows"]] == [1, 2, 3]
    assert all(math.isfinite(r["mse_emp_mean"]) for r in out["rows"])


def test_verify_cumulants_suite():
    rep = amp_lab.verify("cumulants")
    assert rep["pass"] is True
