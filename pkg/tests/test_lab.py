import datetime as dt

import numpy as np
import pytest

from panelshock import lab
from panelshock.data import dataset_hash
from panelshock.decomposition import SurpriseMatrix, decompose_at_angle
from panelshock.errors import ConfigError, ExplosiveDgp
from panelshock.lab import DgpSpec


def test_default_dgp_is_stable_and_sign_stable():
    spec = DgpSpec()
    assert spec.spectral_radius() < 1
    for shock, impact in (("MP", spec.mp_impact), ("ID", spec.id_impact)):
        irf = spec.unit_irf((0.0,) + impact, 36)[:, 1:]
        assert np.all(np.sign(irf) == np.asarray(spec.irf_signs[shock]))


def test_validation():
    a = np.zeros((1, 5, 5))
    a[0, 1, 1] = 1.01
    with pytest.raises(ExplosiveDgp):
        DgpSpec(true_a=a)
    a = np.zeros((1, 5, 5))
    a[0, 0, 1] = 0.1
    with pytest.raises(ConfigError):
        DgpSpec(true_a=a)
    with pytest.raises(ConfigError):
        DgpSpec(true_c=np.array([[1.0, 0.1], [1.0, 0.2]]))
    with pytest.raises(ConfigError):
        DgpSpec(true_sigma=-np.eye(5))


def test_calendar_has_skipped_and_double_months():
    spec = DgpSpec()
    per_month = {}
    for d in spec.meetings:
        per_month[(d.year, d.month)] = per_month.get((d.year, d.month), 0) + 1
    assert set(per_month.values()) == {1, 2}
    assert (2004, 8) not in per_month
    assert all(d.weekday() == 3 for d in spec.meetings)


def test_zero_latents_give_zero_surprises():
    events, _ = lab.simulate_surprises(DgpSpec(latent_std=(0.0, 0.0)))
    assert all(e.i_total == 0 and e.s == 0 for e in events)


def test_symmetric_loadings_decorrelate():
    spec = DgpSpec(true_c=np.array([[1.0, -1.0], [1.0, 1.0]]), latent_std=(1.0, 1.0),
                   meetings=tuple(dt.date(2000, 1, 1) + dt.timedelta(days=k) for k in range(4000)))
    events, _ = lab.simulate_surprises(spec)
    i = np.array([e.i_total for e in events])
    s = np.array([e.s for e in events])
    assert abs(np.corrcoef(i, s)[0, 1]) < 0.05


def test_latents_exactly_orthogonal():
    _, truth = lab.simulate_surprises(DgpSpec(seed=4))
    u = truth.u
    assert abs(u[:, 0] @ u[:, 1]) < 1e-9 * np.linalg.norm(u[:, 0]) * np.linalg.norm(u[:, 1])


def test_decomposition_recovers_truth_at_true_angle():
    spec = DgpSpec(seed=9)
    events, truth = lab.simulate_surprises(spec)
    m = SurpriseMatrix.from_events(events)
    dec = decompose_at_angle(m, truth.alpha)
    np.testing.assert_allclose(dec.u, truth.u, atol=1e-8)
    np.testing.assert_allclose(dec.c, spec.true_c, atol=1e-8)


def test_white_noise_when_dynamics_off():
    spec = DgpSpec(true_a=np.zeros((1, 5, 5)), true_sigma=np.eye(5), n_countries=2, months=1000)
    ds = lab.simulate_panel(spec, np.random.default_rng(0).standard_normal(1000))
    for j in range(1, 5):
        x = ds.data[0, :, j]
        assert abs(np.corrcoef(x[1:], x[:-1])[0, 1]) < 0.1


def test_impulse_trajectory_matches_analytic_irf():
    spec = DgpSpec(n_countries=3)
    t0 = 10
    shock = np.zeros(spec.months)
    shock[t0] = 1.0
    ds = lab.simulate_panel(spec, shock, noise=False)
    irf = spec.shock_irf(spec.months - t0 - 1)
    for i in range(3):
        np.testing.assert_allclose(ds.data[i, t0:], irf, atol=1e-12)
        np.testing.assert_array_equal(ds.data[i, :t0], 0.0)


def test_same_seed_same_bytes():
    spec = DgpSpec(seed=12)
    shock = np.random.default_rng(1).standard_normal(spec.months)
    a = lab.simulate_panel(spec, shock)
    b = lab.simulate_panel(spec, shock)
    assert dataset_hash(a) == dataset_hash(b)
    c = lab.simulate_panel(spec.with_(seed=13), shock)
    assert dataset_hash(a) != dataset_hash(c)


def test_bias_experiment_thread_independent():
    spec = DgpSpec(n_countries=5)
    a = lab.bias_experiment(spec, replications=6, horizon=2, threads=1)
    b = lab.bias_experiment(spec, replications=6, horizon=2, threads=3)
    assert np.array_equal(a.total, b.total) and np.array_equal(a.mp, b.mp)


@pytest.fixture(scope="module")
def default_report():
    return lab.bias_experiment(DgpSpec(), replications=200, horizon=12, threads=4)


def test_default_composite_lies_between(default_report):
    assert default_report.between.all()


def test_default_attenuation_range(default_report):
    assert 0.30 <= float(np.median(default_report.attenuation)) <= 0.70


def test_default_sign_table_matches(default_report):
    for table in default_report.sign_table().values():
        assert table.all()


def test_zero_id_ratio_is_mp_share():
    spec = DgpSpec(id_impact=(0.0, 0.0, 0.0, 0.0))
    r = lab.bias_experiment(spec, replications=200, horizon=6, threads=4)
    z = (r.ratio - r.share) / np.hypot(r.ratio_se, r.share_se)
    assert np.all(np.abs(z) < 4)
    assert abs(r.share - spec.mp_share) < 4 * r.share_se + 0.01


def test_cancellation_composite_vanishes():
    base = DgpSpec()
    spec = base.with_(id_impact=tuple(-x for x in base.mp_impact), latent_std=(3.0, 3.0))
    r = lab.bias_experiment(spec, replications=200, horizon=6, threads=4)
    assert np.all(np.abs(r.total) < 0.05 * np.abs(r.mp))
    assert np.all(r.attenuation > 0.95)


def test_attenuation_monotone_in_id_magnitude():
    base = DgpSpec(n_countries=10)
    att = []
    for k in (0.0, 0.25, 0.5, 0.75, 1.0):
        spec = base.with_(id_impact=tuple(-k * x for x in base.mp_impact))
        r = lab.bias_experiment(spec, replications=200, horizon=3, threads=4)
        att.append(r.attenuation)
    att = np.stack(att)
    assert np.all(np.diff(att, axis=0) > 0)


def test_true_irf_inside_bvar_bands():
    rec = lab.bvar_recovery(DgpSpec(seed=0))
    assert rec.irf_coverage >= 0.90
