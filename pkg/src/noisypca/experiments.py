"""Seeded Monte Carlo experiment engine.

Experiments provided:

bound_tightness        mean/max subspace error vs. the closed-form bound
                       over an alpha grid
phase_transition       empirical success probability P(se <= eps) over an
                       (r or n) x alpha grid
concentration_check    empirical medians of the five batch deviation norms
                       against their high-probability bounds
rank_estimation        fraction of trials in which each automatic rank
                       estimator returns the true r
adversarial_experiment worst-case noise covariance aligned with a
                       complement direction; large error despite small
                       sample deviation
refinement_loop        staged re-estimation where each pass shrinks the
                       effective noise-to-signal ratio geometrically
missing_data_experiment PCA on columns with erased blocks vs. the
                       incoherence-based bound

Every result is a pure function of (config, master_seed): each
(grid point, trial) owns an independent RNG substream, aggregation is
order-independent, and CSV output is byte-identical for any worker count.
"""

import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from statistics import median

import numpy as np

from .bounds import (
    BoundInputs,
    concentration_bounds,
    general_bound,
    missing_q,
    rank_delta,
    sddn_bound,
    sddn_required_alpha,
)
from .errors import InfeasibleModel, InvalidExample, SupportDegenerate, ValidationError
from .estimator import DataBatch, estimate_rank_eigengap, estimate_rank_threshold, pca_estimate, sample_covariance
from .linalg import BasisMatrix, incoherence, orthogonal_complement, subspace_error, top_r_eigvecs
from .model import (
    STREAM_AUX,
    STREAM_MODEL,
    STREAM_NOISE,
    STREAM_SDDN,
    STREAM_SIGNAL,
    SddnModel,
    SignalModel,
    UncorrNoiseModel,
    apply_missing_batch,
    derived_spectra,
    make_random_basis,
    profile_scales,
    row_occupancy,
    sample_sddn_batch,
    sample_signal,
    sample_uncorr_noise,
    substream,
    support_sequence,
)

EPSILON_RULES = ("floor_factor_1_5", "fixed")
DEVIATION_TERMS = ("aa", "lw", "ww", "lv", "vv")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Model parameters plus grid/trial/seed settings for one experiment."""

    n: int
    r: int
    signal_distribution: str = "bounded_uniform"
    signal_lambdas: tuple = (1.0,)
    noise_rv: object = None  # None, 'r', 'n', or an int
    noise_distribution: str = "bounded_uniform"
    noise_scale_base: float = 0.0
    noise_scale_slope: float = 0.0
    sddn_enabled: bool = False
    sddn_s: int = 1
    sddn_b0: float = 0.05
    sddn_rho: int = 1
    sddn_q: float = 0.0
    alpha_grid: tuple = (1000,)
    r_grid: tuple = None
    n_grid: tuple = None
    n_trials: int = 100
    master_seed: int = 0
    c: float = 1.0
    epsilon_rule: str = "floor_factor_1_5"
    epsilon_value: float = None
    refine_q0: float = None
    refine_stages: int = None
    refine_alpha_constant: float = None

    def __post_init__(self):
        if self.n < 1 or not 1 <= self.r <= self.n:
            raise ValidationError("need 1 <= r <= n")
        if len(self.alpha_grid) == 0:
            raise ValidationError("alpha_grid must be non-empty")
        if any(a < 1 for a in self.alpha_grid):
            raise ValidationError("alpha values must be >= 1")
        if self.n_trials < 1:
            raise ValidationError("n_trials must be >= 1")
        if self.r_grid is not None and len(self.r_grid) == 0:
            raise ValidationError("r_grid must be non-empty when given")
        if self.n_grid is not None and len(self.n_grid) == 0:
            raise ValidationError("n_grid must be non-empty when given")
        if not 0 <= self.sddn_q < 1:
            raise ValidationError("sddn q must lie in [0, 1)")
        if self.sddn_enabled and not 0 < self.sddn_b0 <= 1:
            raise ValidationError("sddn b0 must lie in (0, 1]")
        if self.epsilon_rule not in EPSILON_RULES:
            raise ValidationError(f"unknown epsilon rule {self.epsilon_rule!r}")
        if self.epsilon_rule == "fixed" and self.epsilon_value is None:
            raise ValidationError("fixed epsilon rule needs a value")
        if self.c <= 0:
            raise ValidationError("c must be positive")

    def lambdas_for(self, r):
        lam = self.signal_lambdas
        if len(lam) == 1:
            return np.full(r, lam[0])
        if len(lam) != r:
            raise ValidationError(f"signal_lambdas has {len(lam)} entries, need {r}")
        return np.asarray(lam, dtype=float)

    def rv_for(self, n, r):
        if self.noise_rv is None:
            return None
        if self.noise_rv == "r":
            return r
        if self.noise_rv == "n":
            return n
        return int(self.noise_rv)


def with_overrides(cfg, seed=None, c=None, trials=None):
    """Copy of cfg with CLI-level overrides applied."""
    kwargs = {}
    if seed is not None:
        kwargs["master_seed"] = int(seed)
    if c is not None:
        kwargs["c"] = float(c)
    if trials is not None:
        kwargs["n_trials"] = int(trials)
    return replace(cfg, **kwargs) if kwargs else cfg


@dataclass(frozen=True)
class ModelRealization:
    """One drawn model: fixed across trials and across the alpha grid."""

    n: int
    r: int
    signal: SignalModel
    noise: object  # UncorrNoiseModel | None
    sddn: object  # SddnModel | None
    spectra: object  # DerivedSpectra


def realize_model(cfg, n=None, r=None):
    """Draw (P, B) for the given grid point from the master seed.

    The realization depends only on (master_seed, n, r), so every alpha
    and every trial of one experiment sees the same subspaces.
    """
    n = cfg.n if n is None else n
    r = cfg.r if r is None else r
    rng = substream(cfg.master_seed, STREAM_MODEL, n, r)
    p = make_random_basis(n, r, rng)
    signal = SignalModel(p, cfg.lambdas_for(r), cfg.signal_distribution)
    r_v = cfg.rv_for(n, r)
    noise = None
    if r_v is not None:
        b = None if r_v == n else make_random_basis(n, r_v, rng)
        scales = profile_scales(r_v, cfg.noise_scale_base, cfg.noise_scale_slope)
        noise = UncorrNoiseModel(n=n, scales=scales, distribution=cfg.noise_distribution, B=b)
    sddn = None
    if cfg.sddn_enabled:
        sddn = SddnModel(s=cfg.sddn_s, b0=cfg.sddn_b0, rho=cfg.sddn_rho, q=cfg.sddn_q)
    return ModelRealization(n, r, signal, noise, sddn, derived_spectra(signal, noise))


def bound_inputs(cfg, model, alpha, b):
    regime = "bounded" if model.signal.distribution == "bounded_uniform" else "subgaussian"
    return BoundInputs(
        spectra=model.spectra,
        r=model.r,
        r_v=model.noise.r_v if model.noise is not None else 0,
        n=model.n,
        alpha=alpha,
        eta=model.signal.eta,
        q=model.sddn.q if model.sddn is not None else 0.0,
        b=b,
        c=cfg.c,
        regime=regime,
    )


# ---------------------------------------------------------------------------
# Single trial
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialResult:
    se: float
    r_hat_threshold: int
    r_hat_gap: int
    deviation_norms: tuple = None  # (aa, lw, ww, lv, vv) when recorded
    realized_b: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.se <= 1.0 + 1e-12:
            raise ValidationError(f"subspace error {self.se} outside [0, 1]")


def run_trial(cfg, grid_point, trial_index, record_deviations=True):
    """One full Monte Carlo trial, determined by (master_seed, grid_point, trial).

    grid_point is either an alpha or an (n, r, alpha) triple.
    """
    if np.isscalar(grid_point):
        n, r, alpha = cfg.n, cfg.r, int(grid_point)
    else:
        n, r, alpha = (int(v) for v in grid_point)
    model = realize_model(cfg, n, r)
    return _trial(cfg, model, alpha, trial_index, record_deviations)


def _trial(cfg, model, alpha, trial, record_deviations=False):
    n, r = model.n, model.r
    seed = cfg.master_seed
    l_cols, a_cols = sample_signal(
        model.signal, substream(seed, STREAM_SIGNAL, n, r, alpha, trial), alpha
    )
    y = l_cols.copy()
    v_cols = None
    if model.noise is not None:
        v_cols = sample_uncorr_noise(
            model.noise, substream(seed, STREAM_NOISE, n, r, alpha, trial), alpha
        )
        y += v_cols
    w_cols = None
    moments = None
    realized_b = 0.0
    if model.sddn is not None:
        supports = support_sequence(n, model.sddn, alpha)
        w_cols, moments = sample_sddn_batch(
            model.sddn,
            model.signal.P,
            supports,
            l_cols,
            substream(seed, STREAM_SDDN, n, r, alpha, trial),
            lambdas=model.signal.lambdas,
            moments=record_deviations,
        )
        y += w_cols
        realized_b = row_occupancy(supports, n)

    d = sample_covariance(DataBatch(y))
    phat = top_r_eigvecs(d, r)
    se = subspace_error(phat, model.signal.P)
    r_thr = estimate_rank_threshold(d, model.signal.lambda_minus)
    r_gap = estimate_rank_eigengap(d)

    deviations = None
    if record_deviations:
        pe = model.signal.P.entries
        sigma_l = (pe * model.signal.lambdas) @ pe.T
        dev_aa = np.linalg.norm(a_cols @ a_cols.T / alpha - np.diag(model.signal.lambdas), 2)
        dev_lw = dev_ww = 0.0
        if w_cols is not None:
            dev_lw = np.linalg.norm(l_cols @ w_cols.T / alpha - sigma_l @ moments.mean_m.T, 2)
            dev_ww = np.linalg.norm(w_cols @ w_cols.T / alpha - moments.mean_mlm, 2)
        dev_lv = dev_vv = 0.0
        if v_cols is not None:
            dev_lv = np.linalg.norm(l_cols @ v_cols.T / alpha, 2)
            dev_vv = np.linalg.norm(v_cols @ v_cols.T / alpha - model.noise.covariance(), 2)
        deviations = (float(dev_aa), float(dev_lw), float(dev_ww), float(dev_lv), float(dev_vv))

    return TrialResult(float(se), r_thr, r_gap, deviations, realized_b)


# ---------------------------------------------------------------------------
# Parallel trial runner (deterministic for any worker count)
# ---------------------------------------------------------------------------

def _trial_chunk(args):
    cfg, n, r, alpha, trials, record = args
    model = realize_model(cfg, n, r)
    return [_trial(cfg, model, alpha, t, record) for t in trials]


def _run_trials(cfg, n, r, alpha, workers=1, record_deviations=False, model=None):
    trials = list(range(cfg.n_trials))
    if workers <= 1:
        if model is None:
            model = realize_model(cfg, n, r)
        return [_trial(cfg, model, alpha, t, record_deviations) for t in trials]
    chunk = max(1, (len(trials) + workers - 1) // workers)
    tasks = [
        (cfg, n, r, alpha, trials[i : i + chunk], record_deviations)
        for i in range(0, len(trials), chunk)
    ]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_trial_chunk, tasks):
            out.extend(part)
    return out


# ---------------------------------------------------------------------------
# Grid results and CSV emission
# ---------------------------------------------------------------------------

def _format_cell(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


@dataclass
class GridResult:
    """Aggregated experiment output: named columns plus one row per grid cell."""

    columns: tuple
    rows: list

    def to_csv_bytes(self):
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_format_cell(v) for v in row))
        return ("\n".join(lines) + "\n").encode("ascii")

    def write(self, path=None):
        data = self.to_csv_bytes()
        if path is None or path == "-":
            sys.stdout.write(data.decode("ascii"))
        else:
            with open(path, "wb") as fh:
                fh.write(data)

    def column(self, name):
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def bound_tightness(cfg, workers=1):
    """Mean/max subspace error and the c-calibrated bound per alpha."""
    model = realize_model(cfg)
    rows = []
    for alpha in cfg.alpha_grid:
        results = _run_trials(cfg, model.n, model.r, alpha, workers, model=model)
        ses = [t.se for t in results]
        report = general_bound(bound_inputs(cfg, model, alpha, results[0].realized_b))
        rows.append((alpha, float(np.mean(ses)), float(np.max(ses)), report.se_bound))
    return GridResult(("alpha", "mean_se", "max_se", "bound"), rows)


def success_epsilon(cfg, model):
    """Error target for phase-transition success counting.

    The default rule scales the population-level bound floor:
    1.5 * (sqrt(b0)(2q+q^2) f + (lam_vPPperp/lam^-)
           / (1 - (lam_vrest^+ - lam_vP^-)/lam^-)).
    """
    if cfg.epsilon_rule == "fixed":
        return float(cfg.epsilon_value)
    s = model.spectra
    q = model.sddn.q if model.sddn is not None else 0.0
    b0 = model.sddn.b0 if model.sddn is not None else 0.0
    rest = 1.0 - (s.lambda_vrest_plus - s.lambda_vP_minus) / s.lambda_minus
    if rest <= 0:
        raise InfeasibleModel("noise outside the subspace exceeds the signal floor")
    floor = (s.lambda_vPPperp / s.lambda_minus) / rest
    return 1.5 * (np.sqrt(b0) * (2 * q + q * q) * s.f + floor)


def phase_transition(cfg, workers=1):
    """Success probability P(se <= eps) over (r or n) x alpha."""
    if (cfg.r_grid is None) == (cfg.n_grid is None):
        raise ValidationError("set exactly one of r_grid / n_grid")
    axis_name = "r" if cfg.r_grid is not None else "n"
    values = cfg.r_grid if cfg.r_grid is not None else cfg.n_grid
    rows = []
    for value in values:
        n, r = (cfg.n, value) if axis_name == "r" else (value, cfg.r)
        model = realize_model(cfg, n, r)
        eps = success_epsilon(cfg, model)
        for alpha in cfg.alpha_grid:
            results = _run_trials(cfg, n, r, alpha, workers, model=model)
            prob = np.mean([t.se <= eps for t in results])
            rows.append((value, alpha, float(prob)))
    return GridResult((axis_name, "alpha", "probability"), rows)


def concentration_check(cfg, workers=1):
    """Median of each batch deviation norm against its concentration bound."""
    model = realize_model(cfg)
    rows = []
    for alpha in cfg.alpha_grid:
        results = _run_trials(cfg, model.n, model.r, alpha, workers, record_deviations=True, model=model)
        limits = concentration_bounds(bound_inputs(cfg, model, alpha, results[0].realized_b))
        for idx, term in enumerate(DEVIATION_TERMS):
            med = median(t.deviation_norms[idx] for t in results)
            rows.append((alpha, term, float(med), limits[term]))
    return GridResult(("alpha", "term_name", "empirical_median", "lemma_bound"), rows)


def rank_estimation(cfg, workers=1):
    """Fraction of trials in which each rank estimator recovers the true r."""
    model = realize_model(cfg)
    rows = []
    for alpha in cfg.alpha_grid:
        results = _run_trials(cfg, model.n, model.r, alpha, workers, model=model)
        delta = rank_delta(bound_inputs(cfg, model, alpha, results[0].realized_b))
        p_thr = np.mean([t.r_hat_threshold == model.r for t in results])
        p_gap = np.mean([t.r_hat_gap == model.r for t in results])
        rows.append((alpha, delta, float(p_thr), float(p_gap)))
    return GridResult(("alpha", "delta", "p_threshold", "p_gap"), rows)


def adversarial_sigma(n, r, alpha, lambdas, rng, distribution="gaussian", chunk=100000):
    """Worst-case noise covariance 1.2*lam^- along one complement direction.

    Returns (se, deviation) where deviation = ||D - E[D]||_2 / lam^-.
    When the deviation is small the top-r sample eigenspace locks onto the
    complement direction and se approaches one. Requires
    lambda_{r-1} >= 1.1 lambda^-.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    lam_minus = lambdas[-1]
    if r >= 2 and lambdas[r - 2] < 1.1 * lam_minus:
        raise InvalidExample(
            f"need lambda_(r-1) >= 1.1 lambda^-: {lambdas[r - 2]} < {1.1 * lam_minus}"
        )
    p = make_random_basis(n, r, rng)
    u = orthogonal_complement(p).entries[:, :1]
    signal = SignalModel(p, lambdas, distribution)
    variance = 1.2 * lam_minus
    amp = np.sqrt(3.0 * variance) if distribution == "bounded_uniform" else np.sqrt(variance)
    noise = UncorrNoiseModel(n=n, scales=np.array([amp]), distribution=distribution, B=BasisMatrix(u))
    d = np.zeros((n, n))
    done = 0
    while done < alpha:
        count = min(chunk, alpha - done)
        l_cols, _ = sample_signal(signal, rng, count)
        y = l_cols + sample_uncorr_noise(noise, rng, count)
        d += y @ y.T
        done += count
    d = (d + d.T) / (2.0 * alpha)
    expected = (p.entries * lambdas) @ p.entries.T + noise.covariance()
    se = subspace_error(top_r_eigvecs(d, r), p)
    deviation = float(np.linalg.norm(d - expected, 2) / lam_minus)
    return float(se), deviation


def adversarial_experiment(cfg):
    """Per-trial (se, deviation) rows for the adversarial covariance."""
    alpha = cfg.alpha_grid[0]
    lambdas = cfg.lambdas_for(cfg.r)
    rows = []
    for trial in range(cfg.n_trials):
        rng = substream(cfg.master_seed, STREAM_AUX, cfg.n, cfg.r, alpha, trial)
        se, dev = adversarial_sigma(
            cfg.n, cfg.r, alpha, lambdas, rng, distribution=cfg.signal_distribution
        )
        rows.append((trial, se, dev))
    return GridResult(("trial", "se", "deviation"), rows)


def _tilted_basis(p, target_se, rng):
    """Basis at exact subspace error target_se from p (rotate first column)."""
    if target_se <= 0:
        return p
    direction = rng.standard_normal(p.n)
    direction -= p.entries @ (p.entries.T @ direction)
    direction /= np.linalg.norm(direction)
    theta = np.arcsin(target_se)
    entries = p.entries.copy()
    entries[:, 0] = np.cos(theta) * entries[:, 0] + np.sin(theta) * direction
    return BasisMatrix(entries)


def refinement_loop(cfg, stages=None, q0=None, trial=0):
    """Staged subspace refinement under projection-induced sparse noise.

    Starting from an estimate with error q0/1.2, each stage builds error
    vectors e_t = I_T B_T^{-1} I_T' (I - Phat Phat') l_t on a fresh batch,
    re-estimates the subspace from l_t + e_t, and should contract the
    error by 0.3 per stage: se_k <= 0.25 * q0 * 0.3^(k-1).

    Returns a GridResult with columns (stage, se, stage_bound).
    """
    stages = cfg.refine_stages if stages is None else stages
    q0 = cfg.refine_q0 if q0 is None else q0
    constant = cfg.refine_alpha_constant if cfg.refine_alpha_constant is not None else 16.0
    if stages is None or q0 is None:
        raise ValidationError("refinement needs q0 and a stage count")
    if not cfg.sddn_enabled:
        raise ValidationError("refinement needs the sparse support model")
    n, r = cfg.n, cfg.r
    model = realize_model(cfg)
    f = model.signal.f
    if 3.0 * np.sqrt(cfg.sddn_b0) * f >= 0.2:
        raise InfeasibleModel("refinement contraction requires 3 sqrt(b0) f < 0.2")
    p = model.signal.P
    phat = _tilted_basis(p, q0 / 1.2, substream(cfg.master_seed, STREAM_AUX, n, r, trial))
    rows = []
    q_stage = q0
    for k in range(1, stages + 1):
        # With eps_se = q/4 the sample-size formula is q-independent
        # ((q f / eps)^2 = 16 f^2), so the q -> 0 limit uses the same value.
        alpha = sddn_required_alpha(max(q_stage, 1e-12), f, r, n,
                                    max(q_stage, 1e-12) / 4.0, constant)
        supports = support_sequence(n, model.sddn, alpha)
        l_cols, _ = sample_signal(
            model.signal, substream(cfg.master_seed, STREAM_SIGNAL, n, r, alpha, trial, k), alpha
        )
        resid = l_cols - phat.entries @ (phat.entries.T @ l_cols)
        e_cols = np.zeros_like(l_cols)
        starts = supports[:, 0]
        for start in np.unique(starts):
            frames = np.nonzero(starts == start)[0]
            t_rows = supports[frames[0]]
            pt = phat.entries[t_rows, :]
            b_mat = np.eye(len(t_rows)) - pt @ pt.T
            # Eigenvalues of B_T lie in (0, 1]; near-zero means the block is
            # almost inside the estimated subspace.
            if np.min(np.linalg.eigvalsh(b_mat)) < 1e-8:
                raise SupportDegenerate(
                    f"masked Gram matrix near-singular on block {t_rows}"
                )
            e_cols[np.ix_(t_rows, frames)] = np.linalg.solve(b_mat, resid[np.ix_(t_rows, frames)])
        phat = pca_estimate(DataBatch(l_cols + e_cols), r)
        se = subspace_error(phat, p)
        rows.append((k, float(se), 0.25 * q0 * 0.3 ** (k - 1)))
        q_stage *= 0.3
    return GridResult(("stage", "se", "stage_bound"), rows)


def missing_data_experiment(cfg, workers=1):
    """PCA with erased entry blocks against the incoherence-based bound."""
    if not cfg.sddn_enabled:
        raise ValidationError("missing-data experiment needs the support model")
    model = realize_model(cfg)
    mu = incoherence(model.signal.P)
    q = missing_q(mu, model.r, cfg.sddn_s, model.n)
    rows = []
    for alpha in cfg.alpha_grid:
        supports = support_sequence(model.n, model.sddn, alpha)
        realized_b = row_occupancy(supports, model.n)
        ses = []
        for trial in range(cfg.n_trials):
            l_cols, _ = sample_signal(
                model.signal,
                substream(cfg.master_seed, STREAM_SIGNAL, model.n, model.r, alpha, trial),
                alpha,
            )
            y = apply_missing_batch(l_cols, supports)
            phat = pca_estimate(DataBatch(y), model.r)
            ses.append(subspace_error(phat, model.signal.P))
        inputs = replace(
            bound_inputs(cfg, model, alpha, realized_b), q=q
        )
        report = sddn_bound(inputs)
        rows.append((alpha, float(np.mean(ses)), float(np.max(ses)), report.se_bound))
    return GridResult(("alpha", "mean_se", "max_se", "bound"), rows)
