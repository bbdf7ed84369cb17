"""Experiment-engine tests: determinism, parallel equivalence, small runs."""

import numpy as np
import pytest

from noisypca.bounds import BoundInputs, expected_perturbation, sddn_bound
from noisypca.errors import (
    CorollaryInapplicable,
    InfeasibleModel,
    InvalidExample,
    ValidationError,
)
from noisypca.experiments import (
    ExperimentConfig,
    GridResult,
    adversarial_experiment,
    adversarial_sigma,
    bound_tightness,
    concentration_check,
    missing_data_experiment,
    phase_transition,
    rank_estimation,
    realize_model,
    refinement_loop,
    run_trial,
    success_epsilon,
)
from noisypca.linalg import subspace_error, top_r_eigvecs, orthogonal_complement
from noisypca.model import make_random_basis, sample_sddn_batch, substream, support_sequence


def small_cfg(**overrides):
    base = dict(
        n=40,
        r=3,
        signal_distribution="bounded_uniform",
        signal_lambdas=(12.0,),
        noise_rv="r",
        noise_distribution="bounded_uniform",
        noise_scale_base=1.1,
        noise_scale_slope=-0.1,
        sddn_enabled=True,
        sddn_s=2,
        sddn_b0=0.05,
        sddn_rho=1,
        sddn_q=0.001,
        alpha_grid=(300, 900),
        n_trials=4,
        master_seed=5,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# --- trials ------------------------------------------------------------------

def test_run_trial_deterministic():
    cfg = small_cfg()
    a = run_trial(cfg, 300, 2)
    b = run_trial(cfg, 300, 2)
    assert a == b


def test_run_trial_noiseless_exact():
    cfg = small_cfg(noise_rv=None, sddn_enabled=False, alpha_grid=(50,))
    t = run_trial(cfg, 50, 0)
    assert t.se <= 1e-8
    assert t.r_hat_threshold == 3
    assert t.r_hat_gap == 3


def test_run_trial_grid_point_forms():
    cfg = small_cfg()
    assert run_trial(cfg, 300, 1) == run_trial(cfg, (40, 3, 300), 1)


def test_run_trial_records_five_deviations():
    cfg = small_cfg()
    t = run_trial(cfg, 300, 0)
    assert len(t.deviation_norms) == 5
    assert all(d >= 0 for d in t.deviation_norms)
    assert t.realized_b <= cfg.sddn_b0 + cfg.sddn_s / 300 + 1e-12


def test_trial_se_below_bound_small_model():
    cfg = small_cfg(alpha_grid=(2000,), n_trials=6)
    res = bound_tightness(cfg)
    _, mean, mx, bound = res.rows[0]
    assert np.isfinite(bound)
    assert mx <= bound


def test_sddn_population_terms_within_expected_perturbation():
    # The realized-dependency aggregates obey the Cauchy-Schwarz caps.
    cfg = small_cfg(noise_rv=None, alpha_grid=(600,), sddn_q=0.4, sddn_s=4, sddn_b0=0.2)
    model = realize_model(cfg)
    supports = support_sequence(model.n, model.sddn, 600)
    from noisypca.model import sample_signal

    l, _ = sample_signal(model.signal, substream(5, 1, 40, 3, 600, 0), 600)
    _, moments = sample_sddn_batch(
        model.sddn, model.signal.P, supports, l, substream(5, 3, 40, 3, 600, 0),
        lambdas=model.signal.lambdas, moments=True,
    )
    pe = model.signal.P.entries
    sigma_l = (pe * model.signal.lambdas) @ pe.T
    b = cfg.sddn_b0 + cfg.sddn_s / 600
    cross = np.linalg.norm(sigma_l @ moments.mean_m.T, 2)
    power = np.linalg.norm(moments.mean_mlm, 2)
    assert cross <= np.sqrt(b) * cfg.sddn_q * 12.0 * (1 + 1e-9)
    assert power <= np.sqrt(b) * cfg.sddn_q**2 * 12.0 * (1 + 1e-9)
    num, den = expected_perturbation(model.spectra, cfg.sddn_q, b)
    assert 2 * cross + power <= num + den  # loose cross-check of the assembly


# --- grid experiments -----------------------------------------------------------

def test_bound_tightness_zero_noise_flat():
    cfg = small_cfg(noise_rv=None, sddn_enabled=False, alpha_grid=(60, 240))
    res = bound_tightness(cfg)
    assert all(row[1] <= 1e-8 for row in res.rows)


def test_bound_tightness_columns_and_rows():
    cfg = small_cfg()
    res = bound_tightness(cfg)
    assert res.columns == ("alpha", "mean_se", "max_se", "bound")
    assert [row[0] for row in res.rows] == [300, 900]
    for row in res.rows:
        assert row[2] >= row[1]  # max >= mean


def test_phase_transition_requires_single_axis():
    with pytest.raises(ValidationError):
        phase_transition(small_cfg(r_grid=(2, 3), n_grid=(40, 80)))
    with pytest.raises(ValidationError):
        phase_transition(small_cfg())


def test_phase_transition_probabilities_valid():
    cfg = small_cfg(r_grid=(2, 3), n_trials=6, alpha_grid=(200, 800, 3200))
    res = phase_transition(cfg)
    probs = res.column("probability")
    assert all(0.0 <= p <= 1.0 for p in probs)
    # Per-row monotone non-decreasing in alpha up to one inversion.
    for value in (2, 3):
        row = [p for v, a, p in res.rows if v == value]
        inversions = sum(1 for x, y in zip(row, row[1:]) if y < x)
        assert inversions <= 1


def test_phase_transition_fixed_epsilon_rule():
    cfg = small_cfg(epsilon_rule="fixed", epsilon_value=0.05, r_grid=(3,),
                    alpha_grid=(200, 1600), n_trials=4)
    model = realize_model(cfg, cfg.n, 3)
    assert success_epsilon(cfg, model) == 0.05
    res = phase_transition(cfg)
    assert len(res.rows) == 2


def test_concentration_check_zero_component_terms():
    cfg = small_cfg(sddn_q=0.0, alpha_grid=(400,), n_trials=3)
    res = concentration_check(cfg)
    by_term = {row[1]: row[2] for row in res.rows}
    assert by_term["lw"] == 0.0
    assert by_term["ww"] == 0.0
    cfg2 = small_cfg(noise_rv=None, alpha_grid=(400,), n_trials=3)
    res2 = concentration_check(cfg2)
    by_term2 = {row[1]: row[2] for row in res2.rows}
    assert by_term2["lv"] == 0.0
    assert by_term2["vv"] == 0.0


def test_concentration_check_medians_decay():
    cfg = small_cfg(alpha_grid=(200, 800, 3200), n_trials=9)
    res = concentration_check(cfg)
    for term in ("aa", "lw", "lv", "vv"):
        meds = [row[2] for row in res.rows if row[1] == term]
        assert meds[0] > meds[1] > meds[2]


def test_rank_estimation_small_model():
    cfg = small_cfg(alpha_grid=(3000,), n_trials=5)
    res = rank_estimation(cfg)
    alpha, delta, p_thr, p_gap = res.rows[0]
    assert delta < 0.5
    assert p_thr == 1.0
    assert p_gap == 1.0


def test_rank_delta_dominates_empirical_deviation():
    # ||D - D0||_2 <= Delta * lambda^- with D0 = P (Lambda + P'Sigma_v P) P',
    # in at least 95% of trials at c = 1.
    from noisypca.bounds import rank_delta
    from noisypca.estimator import sample_covariance, DataBatch
    from noisypca.experiments import bound_inputs
    from noisypca.model import (
        row_occupancy,
        sample_signal,
        sample_sddn_batch,
        sample_uncorr_noise,
    )

    alpha, trials = 2000, 20
    cfg = small_cfg(alpha_grid=(alpha,), n_trials=trials)
    model = realize_model(cfg)
    pe = model.signal.P.entries
    middle = np.diag(model.signal.lambdas) + pe.T @ model.noise.covariance() @ pe
    d0 = pe @ middle @ pe.T
    supports = support_sequence(model.n, model.sddn, alpha)
    delta = rank_delta(
        bound_inputs(cfg, model, alpha, row_occupancy(supports, model.n))
    )
    cap = delta * model.signal.lambda_minus
    hits = 0
    for trial in range(trials):
        seed = cfg.master_seed
        l, _ = sample_signal(model.signal, substream(seed, 1, model.n, model.r, alpha, trial), alpha)
        v = sample_uncorr_noise(model.noise, substream(seed, 2, model.n, model.r, alpha, trial), alpha)
        w, _ = sample_sddn_batch(model.sddn, model.signal.P, supports, l,
                                 substream(seed, 3, model.n, model.r, alpha, trial))
        d = sample_covariance(DataBatch(l + v + w))
        hits += np.linalg.norm(d - d0, 2) <= cap
    assert hits >= 0.95 * trials


# --- adversarial -----------------------------------------------------------------

def test_adversarial_population_eigenspace_is_orthogonal_to_p_r():
    # Top-r eigenspace of the population matrix swaps P_r for the noise
    # direction, giving subspace error exactly one.
    rng = np.random.default_rng(0)
    n, r = 30, 4
    p = make_random_basis(n, r, rng)
    lambdas = np.array([14.0, 13.5, 13.5, 12.0])
    u = orthogonal_complement(p).entries[:, :1]
    expected_d = (p.entries * lambdas) @ p.entries.T + 1.2 * 12.0 * (u @ u.T)
    phat = top_r_eigvecs(expected_d, r)
    assert subspace_error(phat, p) == pytest.approx(1.0, abs=1e-10)


def test_adversarial_weak_noise_keeps_signal_space():
    rng = np.random.default_rng(1)
    n, r = 30, 4
    p = make_random_basis(n, r, rng)
    lambdas = np.array([14.0, 13.5, 13.5, 12.0])
    u = orthogonal_complement(p).entries[:, :1]
    weak_d = (p.entries * lambdas) @ p.entries.T + 0.5 * 12.0 * (u @ u.T)
    phat = top_r_eigvecs(weak_d, r)
    assert subspace_error(phat, p) <= 1e-10


def test_adversarial_sigma_rejects_bad_profile():
    rng = np.random.default_rng(2)
    with pytest.raises(InvalidExample):
        adversarial_sigma(30, 5, 1000, [14.0, 13.0, 13.0, 13.0, 12.0], rng)


def test_adversarial_sigma_small_run():
    rng = np.random.default_rng(3)
    se, dev = adversarial_sigma(30, 3, 120_000, [14.0, 13.5, 12.0], rng)
    assert dev < 0.05
    assert se >= 1.0 - 11.1 * dev - 1e-9


def test_adversarial_experiment_rows():
    cfg = small_cfg(
        n=30, r=3, signal_distribution="gaussian",
        signal_lambdas=(14.0, 13.5, 12.0), noise_rv=None, sddn_enabled=False,
        alpha_grid=(50_000,), n_trials=2,
    )
    res = adversarial_experiment(cfg)
    assert res.columns == ("trial", "se", "deviation")
    assert len(res.rows) == 2
    assert res.rows[0][0] == 0 and res.rows[1][0] == 1


# --- refinement -------------------------------------------------------------------

def refinement_cfg(**overrides):
    # Contraction precondition 3 sqrt(b) f < 0.2 forces occupancy below
    # 0.0044, hence n well above 225 * s.
    base = dict(
        n=240,
        r=3,
        signal_distribution="bounded_uniform",
        signal_lambdas=(12.0,),
        noise_rv=None,
        sddn_enabled=True,
        sddn_s=1,
        sddn_b0=1.0 / 240,
        sddn_rho=1,
        sddn_q=0.0,
        alpha_grid=(100,),
        n_trials=1,
        master_seed=2,
        refine_q0=0.06,
        refine_stages=3,
        refine_alpha_constant=16.0,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_refinement_zero_start_stays_exact():
    res = refinement_loop(refinement_cfg(refine_q0=0.0), trial=0)
    assert all(row[1] <= 1e-8 for row in res.rows)


def test_refinement_single_stage_within_sddn_bound():
    cfg = refinement_cfg(refine_stages=1)
    res = refinement_loop(cfg, trial=0)
    stage, se, stage_bound = res.rows[0]
    model = realize_model(cfg)
    from noisypca.bounds import sddn_required_alpha

    alpha = sddn_required_alpha(0.06, 1.0, 3, 240, 0.015, 16.0)
    supports = support_sequence(240, model.sddn, alpha)
    from noisypca.model import row_occupancy

    inputs = BoundInputs(
        spectra=model.spectra, r=3, r_v=0, n=240, alpha=alpha, eta=3.0,
        q=0.06, b=row_occupancy(supports, 240), c=1.0, regime="bounded",
    )
    report = sddn_bound(inputs)
    assert report.feasible
    assert se <= report.se_bound


def test_refinement_requires_small_occupancy():
    with pytest.raises(InfeasibleModel):
        refinement_loop(refinement_cfg(sddn_s=12, sddn_b0=0.1), trial=0)


def test_refinement_trajectory_contracts():
    res = refinement_loop(refinement_cfg(), trial=1)
    ses = [row[1] for row in res.rows]
    bounds_col = [row[2] for row in res.rows]
    assert all(se <= b for se, b in zip(ses, bounds_col))
    assert ses[-1] <= ses[0]


# --- missing data -----------------------------------------------------------------

def missing_cfg(**overrides):
    base = dict(
        n=60,
        r=3,
        signal_distribution="bounded_uniform",
        signal_lambdas=(12.0,),
        noise_rv=None,
        sddn_enabled=True,
        sddn_s=3,
        sddn_b0=0.05,
        sddn_rho=1,
        sddn_q=0.0,
        alpha_grid=(2000,),
        n_trials=4,
        master_seed=4,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_missing_data_within_bound():
    res = missing_data_experiment(missing_cfg())
    alpha, mean, mx, bound = res.rows[0]
    assert mx <= bound
    assert mean <= mx


def test_missing_data_refuses_when_q_exceeds_one():
    with pytest.raises(CorollaryInapplicable):
        missing_data_experiment(missing_cfg(sddn_s=50))


# --- determinism and CSV ----------------------------------------------------------

def test_grid_result_csv_format():
    res = GridResult(("alpha", "x"), [(10, 0.5), (20, float("inf"))])
    data = res.to_csv_bytes().decode()
    lines = data.strip().split("\n")
    assert lines[0] == "alpha,x"
    assert lines[1] == "10,0.5"
    assert lines[2] == "20,inf"
    long_float = GridResult(("v",), [(0.1 + 0.2,)]).to_csv_bytes().decode()
    assert "0.30000000000000004" in long_float


def test_bound_tightness_bytes_deterministic():
    cfg = small_cfg()
    a = bound_tightness(cfg).to_csv_bytes()
    b = bound_tightness(cfg).to_csv_bytes()
    assert a == b


def test_bound_tightness_worker_count_invariant():
    cfg = small_cfg()
    serial = bound_tightness(cfg, workers=1).to_csv_bytes()
    parallel = bound_tightness(cfg, workers=2).to_csv_bytes()
    assert serial == parallel


def test_phase_transition_worker_count_invariant():
    cfg = small_cfg(r_grid=(2, 3), alpha_grid=(200, 800), n_trials=4)
    serial = phase_transition(cfg, workers=1).to_csv_bytes()
    parallel = phase_transition(cfg, workers=3).to_csv_bytes()
    assert serial == parallel


def test_experiment_config_validation():
    with pytest.raises(ValidationError):
        small_cfg(alpha_grid=())
    with pytest.raises(ValidationError):
        small_cfg(n_trials=0)
    with pytest.raises(ValidationError):
        small_cfg(sddn_q=1.2)
    with pytest.raises(ValidationError):
        small_cfg(epsilon_rule="fixed")  # missing value
    with pytest.raises(ValidationError):
        small_cfg(r=50)  # r > n
