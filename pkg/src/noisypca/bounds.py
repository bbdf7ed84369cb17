"""Closed-form finite-sample error bounds and feasibility conditions.

Every evaluator is pure arithmetic on BoundInputs. Notation (all ratios
relative to the smallest signal-subspace eigenvalue lambda^-):

    eps_den = c * eta * f * sqrt((r + log n) / alpha)
    eps_bnd = c * sqrt(eta) * max(q f sqrt(r log n / alpha),
                                  g sqrt(max(r_v, r) log n / alpha))   [bounded]
            = c * max(lambda_v^+/lambda^-, f) * sqrt(n / alpha)        [subgaussian]

with g = max(lambda_v^+/lambda^-, sqrt(lambda_v^+ f / lambda^-)).
Logs are natural. The unspecified concentration constant c is an input
everywhere, default 1.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import CorollaryInapplicable, NotIsotropic, ValidationError
from .model import DerivedSpectra

REGIMES = ("bounded", "subgaussian")
ISOTROPY_TOL = 1e-10
SPIKED_FEASIBILITY_CAP = 0.95


@dataclass(frozen=True)
class BoundInputs:
    """Everything a bound evaluator needs about one (model, alpha, c) triple."""

    spectra: DerivedSpectra
    r: int
    r_v: int
    n: int
    alpha: int
    eta: float = 3.0
    q: float = 0.0
    b: float = 0.0
    c: float = 1.0
    regime: str = "bounded"

    def __post_init__(self):
        if self.alpha < 1:
            raise ValidationError("alpha must be >= 1")
        if not 0 <= self.q < 1:
            raise ValidationError("q must lie in [0, 1)")
        if not 0 <= self.b < 1:
            raise ValidationError("b must lie in [0, 1)")
        if self.eta < 1:
            raise ValidationError("eta must be >= 1")
        if self.c <= 0:
            raise ValidationError("c must be positive")
        if self.regime not in REGIMES:
            raise ValidationError(f"unknown regime {self.regime!r}")


@dataclass(frozen=True)
class BoundReport:
    """Assembled bound for one input triple.

    feasible <=> condition_slack > 0 <=> se_bound finite; se_bound is
    +inf when the feasibility condition fails.
    """

    eps_bnd: float
    eps_den: float
    se_bound: float
    feasible: bool
    condition_slack: float


def eps_den(inputs):
    """Denominator concentration term c * eta * f * sqrt((r + log n)/alpha)."""
    s = inputs.spectra
    return inputs.c * inputs.eta * s.f * math.sqrt(
        (inputs.r + math.log(inputs.n)) / inputs.alpha
    )


def eps_bnd(inputs, proof_level=False):
    """Numerator concentration term for the selected regime.

    proof_level=True selects the sharper three-term bounded-regime variant
    that splits the uncorrelated-noise-covariance contribution
    (lambda_v^+/lambda^-) sqrt(r_v log n / alpha) out of the g term.
    """
    s = inputs.spectra
    if inputs.regime == "subgaussian":
        return inputs.c * max(s.lambda_v_plus / s.lambda_minus, s.f) * math.sqrt(
            inputs.n / inputs.alpha
        )
    logn = math.log(inputs.n)
    root_rlog = math.sqrt(inputs.r * logn / inputs.alpha)
    root_maxlog = math.sqrt(max(inputs.r_v, inputs.r) * logn / inputs.alpha)
    terms = [inputs.q * s.f * root_rlog]
    if proof_level:
        ratio = s.lambda_v_plus / s.lambda_minus
        terms.append(math.sqrt(ratio * s.f) * root_maxlog)
        terms.append(ratio * math.sqrt(inputs.r_v * logn / inputs.alpha))
    else:
        terms.append(s.g * root_maxlog)
    return inputs.c * math.sqrt(inputs.eta) * max(terms)


def _sddn_terms(inputs):
    s = inputs.spectra
    root_b = math.sqrt(inputs.b)
    mixed = root_b * (2 * inputs.q + inputs.q**2) * s.f
    condition = 3 * root_b * inputs.q * s.f
    return mixed, condition


def general_bound(inputs):
    """Full subspace-error bound under combined uncorrelated + data-dependent noise.

        se <= (lam_vPPperp/lam^- + sqrt(b)(2q+q^2) f + eps_bnd)
              / (1 - (lam_vrest^+ - lam_vP^-)/lam^- - sqrt(b)(2q+q^2) f
                   - eps_bnd - eps_den)

    feasible iff (lam_vrest^+ - lam_vP^-)/lam^- + 3 sqrt(b) q f
    + eps_bnd + eps_den < 1.
    """
    s = inputs.spectra
    eb = eps_bnd(inputs)
    ed = eps_den(inputs)
    mixed, condition = _sddn_terms(inputs)
    rest_gap = (s.lambda_vrest_plus - s.lambda_vP_minus) / s.lambda_minus
    slack = 1.0 - (rest_gap + condition + eb + ed)
    if slack <= 0:
        return BoundReport(eb, ed, float("inf"), False, slack)
    numerator = s.lambda_vPPperp / s.lambda_minus + mixed + eb
    denominator = 1.0 - rest_gap - mixed - eb - ed
    return BoundReport(eb, ed, numerator / denominator, True, slack)


def spiked_bound(inputs):
    """Simpler bound for isotropic uncorrelated noise: eps_bnd/(1-eps_bnd-eps_den).

    Requires lam_vPPperp = 0 and lam_vrest^+ = lam_vP^- (spiked
    covariance); infeasible when eps_bnd + eps_den >= 0.95.
    """
    s = inputs.spectra
    scale = max(s.lambda_v_plus, 1.0)
    if (
        s.lambda_vPPperp > ISOTROPY_TOL * scale
        or abs(s.lambda_vrest_plus - s.lambda_vP_minus) > ISOTROPY_TOL * scale
    ):
        raise NotIsotropic("noise spectra are not isotropic")
    eb = eps_bnd(inputs)
    ed = eps_den(inputs)
    slack = SPIKED_FEASIBILITY_CAP - (eb + ed)
    if slack <= 0:
        return BoundReport(eb, ed, float("inf"), False, slack)
    return BoundReport(eb, ed, eb / (1.0 - eb - ed), True, slack)


def sddn_bound(inputs):
    """Bound for purely sparse data-dependent noise (Sigma_v = 0).

        se <= (3 sqrt(b) q f + eps_bnd) / (1 - (3 sqrt(b) q f + eps_bnd + eps_den))
    """
    s = inputs.spectra
    if s.lambda_v_plus != 0.0:
        raise ValidationError("sddn_bound expects a noise-free Sigma_v")
    eb = eps_bnd(inputs)
    ed = eps_den(inputs)
    _, condition = _sddn_terms(inputs)
    slack = 1.0 - (condition + eb + ed)
    if slack <= 0:
        return BoundReport(eb, ed, float("inf"), False, slack)
    return BoundReport(eb, ed, (condition + eb) / slack, True, slack)


def rank_delta(inputs):
    """Slack Delta = eps_den + eps_bnd + 3 sqrt(b) q f + lam_vrest^+/lam^-.

    Delta < 1/2 guarantees the threshold rank estimator; Delta also
    enters the eigengap-estimator condition.
    """
    s = inputs.spectra
    _, condition = _sddn_terms(inputs)
    return eps_den(inputs) + eps_bnd(inputs) + condition + (
        s.lambda_vrest_plus / s.lambda_minus
    )


def eigengap_condition(signal_noise_eigs, delta, lambda_minus, lambda_vP_minus):
    """Whether to trust the eigengap rank estimator.

    True when the largest gap among the top r-1 eigenvalues of
    Lambda + P' Sigma_v P is at most (1 - 4 Delta) lambda^- + lam_vP^-.
    """
    eigs = np.asarray(signal_noise_eigs, dtype=float)
    if eigs.size < 2:
        return True
    max_gap = float(np.max(eigs[:-1] - eigs[1:]))
    return max_gap <= (1.0 - 4.0 * delta) * lambda_minus + lambda_vP_minus


def sddn_required_alpha(q, f, r, n, eps_se, constant=1.0):
    """Samples needed for error eps_se under pure sparse data-dependent noise.

        alpha_0 = ceil(C * max((q f / eps_se)^2 * r log n, f^2 (r + log n)))
    """
    if eps_se <= 0:
        raise ValidationError("eps_se must be positive")
    logn = math.log(n)
    first = (q * f / eps_se) ** 2 * r * logn
    second = f**2 * (r + logn)
    return int(math.ceil(constant * max(first, second)))


def missing_q(mu, r, s, n):
    """Noise-to-signal ratio induced by missing entries: q = sqrt(mu^2 r s / n).

    Raises CorollaryInapplicable when the formula gives q >= 1.
    """
    if mu < 1:
        raise ValidationError("incoherence mu is always >= 1")
    q = math.sqrt(mu**2 * r * s / n)
    if q >= 1:
        raise CorollaryInapplicable(
            f"q = {q:.3f} >= 1: basis too sparse or too many missing rows"
        )
    return q


def expected_perturbation(spectra, q, b):
    """Population-level perturbation components (absolute, not ratios).

    Returns (numerator_term, denominator_term) =
    (lam_vPPperp + sqrt(b)(2q+q^2) lam^+, lam_vrest^+ + sqrt(b)(2q+q^2) lam^+),
    the Cauchy-Schwarz bounds on ||E[D-D0] P|| and lambda_max(E[D-D0]).
    """
    shift = math.sqrt(b) * (2 * q + q**2) * spectra.lambda_plus
    return spectra.lambda_vPPperp + shift, spectra.lambda_vrest_plus + shift


def concentration_bounds(inputs):
    """High-probability bounds for the five batch deviation norms (absolute).

    Keys: aa (signal coefficient covariance), lw (signal/dependent-noise
    cross), ww (dependent-noise covariance), lv (signal/uncorrelated
    cross), vv (uncorrelated-noise covariance).
    """
    s = inputs.spectra
    lam = s.lambda_minus
    logn = math.log(inputs.n)
    root_eta = math.sqrt(inputs.eta)
    root_rlog = math.sqrt(inputs.r * logn / inputs.alpha)
    root_maxlog = math.sqrt(max(inputs.r_v, inputs.r) * logn / inputs.alpha)
    root_rvlog = math.sqrt(inputs.r_v * logn / inputs.alpha)
    ratio = s.lambda_v_plus / s.lambda_minus
    c = inputs.c
    return {
        "aa": c * inputs.eta * s.f * math.sqrt((inputs.r + logn) / inputs.alpha) * lam,
        "lw": c * root_eta * inputs.q * s.f * root_rlog * lam,
        "ww": c * root_eta * inputs.q**2 * s.f * root_rlog * lam,
        "lv": c * root_eta * math.sqrt(ratio * s.f) * root_maxlog * lam,
        "vv": c * root_eta * ratio * root_rvlog * lam,
    }
