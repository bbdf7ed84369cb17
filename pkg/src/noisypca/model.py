"""Generative data model and its exact second-order spectra.

Observation columns are y_t = l_t + w_t + v_t where l_t = P a_t is the
signal (zero-mean coefficients with diagonal covariance Lambda), v_t is
uncorrelated possibly non-isotropic noise with covariance Sigma_v, and
w_t = M_t l_t is sparse data-dependent noise supported on a moving index
block T_t. Model descriptions are immutable; sampling takes an explicit
numpy Generator so there is no hidden global state.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidRank, InvalidSupport, ValidationError
from .linalg import BasisMatrix, orthonormalize

# Stream labels for substream derivation; every sampled quantity in an
# experiment gets its own independent stream.
STREAM_MODEL = 0
STREAM_SIGNAL = 1
STREAM_NOISE = 2
STREAM_SDDN = 3
STREAM_AUX = 4

SIGNAL_DISTRIBUTIONS = ("bounded_uniform", "gaussian")


def substream(master_seed, *key):
    """Independent, reproducible Generator for (master_seed, key...)."""
    key = tuple(int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=key))


def make_random_basis(n, r, rng):
    """Random basis: orthonormalized n x r matrix of iid standard normals."""
    if r > n:
        raise InvalidRank(f"r={r} exceeds n={n}")
    return orthonormalize(rng.standard_normal((n, r)))


@dataclass(frozen=True)
class SignalModel:
    """Signal process l_t = P a_t with Var((a_t)_j) = lambdas[j].

    bounded_uniform draws coefficient j from uniform(-sqrt(3 lambda_j),
    +sqrt(3 lambda_j)), so the variance is exactly lambda_j and the
    boundedness constant eta is exactly 3. gaussian draws N(0, lambda_j).
    """

    P: BasisMatrix
    lambdas: np.ndarray
    distribution: str = "bounded_uniform"

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        object.__setattr__(self, "lambdas", lam)
        if lam.ndim != 1 or lam.size != self.P.r:
            raise ValidationError("lambdas must be a length-r sequence")
        if np.any(lam <= 0) or np.any(np.diff(lam) > 0):
            raise ValidationError("lambdas must be positive and non-increasing")
        if self.distribution not in SIGNAL_DISTRIBUTIONS:
            raise ValidationError(f"unknown signal distribution {self.distribution!r}")

    @property
    def n(self):
        return self.P.n

    @property
    def r(self):
        return self.P.r

    @property
    def lambda_minus(self):
        return float(self.lambdas[-1])

    @property
    def lambda_plus(self):
        return float(self.lambdas[0])

    @property
    def f(self):
        return self.lambda_plus / self.lambda_minus

    @property
    def eta(self):
        # Boundedness constant max_j max_t (a_t)_j^2 / lambda_j; the
        # sub-gaussian analysis has no eta, constants fold into c.
        return 3.0 if self.distribution == "bounded_uniform" else 1.0


def sample_signal(model, rng, count=1):
    """Draw (l, a) with l = P a; columns are independent draws."""
    lam = model.lambdas
    if model.distribution == "bounded_uniform":
        half = np.sqrt(3.0 * lam)
        a = rng.uniform(-1.0, 1.0, size=(model.r, count)) * half[:, None]
    else:
        a = rng.standard_normal((model.r, count)) * np.sqrt(lam)[:, None]
    return model.P.entries @ a, a


@dataclass(frozen=True)
class UncorrNoiseModel:
    """Uncorrelated noise v_t = B c_t with per-coordinate amplitudes q_i.

    B is an n x r_v basis, or None for full-dimension noise (r_v = n,
    B = I). Coordinate i of c_t is uniform(-q_i, q_i) (variance q_i^2/3)
    or N(0, q_i^2) depending on the distribution tag, so the implied
    covariance is B diag(sigma_i^2) B'.
    """

    n: int
    scales: np.ndarray
    distribution: str = "bounded_uniform"
    B: BasisMatrix | None = None

    def __post_init__(self):
        scales = np.asarray(self.scales, dtype=float)
        object.__setattr__(self, "scales", scales)
        if scales.ndim != 1 or np.any(scales < 0):
            raise ValidationError("scales must be a 1-d non-negative sequence")
        if self.B is None:
            if scales.size != self.n:
                raise ValidationError("full-dimension noise needs n scales")
        else:
            if self.B.n != self.n or scales.size != self.B.r:
                raise ValidationError("B and scales dimensions inconsistent")
        if self.distribution not in SIGNAL_DISTRIBUTIONS:
            raise ValidationError(f"unknown noise distribution {self.distribution!r}")

    @property
    def r_v(self):
        return self.n if self.B is None else self.B.r

    @property
    def sigma2(self):
        """Per-coordinate variances of c_t."""
        s2 = self.scales**2
        return s2 / 3.0 if self.distribution == "bounded_uniform" else s2

    def covariance(self):
        """Exact Sigma_v = B diag(sigma_i^2) B'."""
        if self.B is None:
            return np.diag(self.sigma2)
        b = self.B.entries
        return (b * self.sigma2) @ b.T

    @property
    def lambda_v_plus(self):
        return float(np.max(self.sigma2)) if self.scales.size else 0.0


def sample_uncorr_noise(model, rng, count=1):
    """Draw v = B c; independent of any signal stream by construction."""
    if model.distribution == "bounded_uniform":
        c = rng.uniform(-1.0, 1.0, size=(model.r_v, count)) * model.scales[:, None]
    else:
        c = rng.standard_normal((model.r_v, count)) * model.scales[:, None]
    return c if model.B is None else model.B.entries @ c


def profile_scales(r_v, base, slope):
    """Linear amplitude profile q_i = base + slope * i / r_v, i = 1..r_v."""
    i = np.arange(1, r_v + 1, dtype=float)
    scales = base + slope * i / r_v
    if np.any(scales < 0):
        raise ValidationError("amplitude profile goes negative")
    return scales


@dataclass(frozen=True)
class SddnModel:
    """Sparse data-dependent noise w_t = I_{T_t} M_{s,t} (q/||M_{s,t}P||) l_t.

    T_t is an s-long block of consecutive indices that dwells for
    rho * ceil(b0 * alpha / rho) frames and then advances by s
    (wrapping modulo n): a 1-d object moving every so often. q in [0, 1)
    is the exact noise-to-signal amplitude enforced per frame; b0 is the
    target per-row occupancy fraction.
    """

    s: int
    b0: float
    rho: int = 1
    q: float = 0.0
    matrix_distribution: str = "abs_gaussian"

    def __post_init__(self):
        if self.s < 1:
            raise ValidationError("support size s must be >= 1")
        if not 0 < self.b0 <= 1:
            raise ValidationError("b0 must lie in (0, 1]")
        if self.rho < 1:
            raise ValidationError("rho must be >= 1")
        if not 0 <= self.q < 1:
            raise ValidationError("q must lie in [0, 1)")
        if self.matrix_distribution != "abs_gaussian":
            raise ValidationError("only abs_gaussian dependency matrices are supported")


def support_sequence(n, model, alpha):
    """Moving-block support schedule T_1..T_alpha as an (alpha, s) index array.

    The realized per-row occupancy is checked against b0 + s/alpha;
    parameter combinations that cannot honor that cap (for example
    b0 much smaller than s/n with alpha spanning many sweeps) raise
    InvalidSupport.
    """
    s = model.s
    if s > n:
        raise InvalidSupport(f"support size {s} exceeds dimension {n}")
    dwell = model.rho * int(np.ceil(model.b0 * alpha / model.rho))
    dwell = max(dwell, 1)
    t = np.arange(alpha)
    starts = (t // dwell) * s % n
    supports = (starts[:, None] + np.arange(s)[None, :]) % n
    occupancy = row_occupancy(supports, n)
    if occupancy > model.b0 + s / alpha + 1e-12:
        raise InvalidSupport(
            f"realized occupancy {occupancy:.4f} exceeds b0 + s/alpha "
            f"= {model.b0 + s / alpha:.4f}; shrink alpha or raise b0"
        )
    return supports


def row_occupancy(supports, n):
    """Max over rows of the fraction of frames in which the row is occupied."""
    supports = np.asarray(supports)
    alpha = supports.shape[0]
    counts = np.bincount(supports.ravel(), minlength=n)
    return float(np.max(counts) / alpha)


def sample_sddn(model, p, support, l, rng):
    """One frame of sparse data-dependent noise on the given support."""
    support = np.asarray(sorted(support), dtype=int)
    w, _ = sample_sddn_batch(
        model, p, support[None, :], np.asarray(l, dtype=float)[:, None], rng
    )
    return w[:, 0]


@dataclass
class SddnMoments:
    """Realized-dependency aggregates needed for concentration checks.

    mean_m is (1/alpha) sum_t M_t and mean_mlm is (1/alpha) sum_t
    M_t P Lambda P' M_t', where M_t = I_{T_t} M_{1,t} is the scaled
    per-frame dependency matrix. Expectations over the signal give
    E[(1/alpha) sum l_t w_t'] = P Lambda P' mean_m' and
    E[(1/alpha) sum w_t w_t'] = mean_mlm.
    """

    mean_m: np.ndarray
    mean_mlm: np.ndarray


def sample_sddn_batch(model, p, supports, l_cols, rng, lambdas=None,
                      moments=False, chunk=20000):
    """Vectorized SDDN noise for a whole batch.

    Parameters
    ----------
    model : SddnModel
    p : BasisMatrix
        True signal basis entering the per-frame normalization.
    supports : (alpha, s) int ndarray
    l_cols : (n, alpha) ndarray
        Signal columns.
    rng : numpy Generator
        Drives the per-frame |N(0,1)| dependency matrices.
    lambdas : optional signal variances, required when moments=True.
    moments : bool
        Also accumulate the SddnMoments aggregates.

    Returns
    -------
    (w_cols, moments_or_None)
    """
    n, alpha = l_cols.shape
    s = model.s
    if moments and lambdas is None:
        raise ValueError("moments=True needs the signal variances")
    pe = p.entries
    w = np.zeros((n, alpha))
    mean_m = np.zeros((n, n)) if moments else None
    mean_mlm = np.zeros((n, n)) if moments else None
    cols = np.arange(alpha)
    for lo in range(0, alpha, chunk):
        hi = min(lo + chunk, alpha)
        m = np.abs(rng.standard_normal((hi - lo, s, n)))
        g = m @ pe  # (chunk, s, r)
        norms = np.linalg.svd(g, compute_uv=False)[:, 0]
        # ||M_{s,t} P|| = 0 has probability zero; resample defensively.
        while np.any(norms == 0):
            bad = np.nonzero(norms == 0)[0]
            m[bad] = np.abs(rng.standard_normal((bad.size, s, n)))
            g[bad] = m[bad] @ pe
            norms[bad] = np.linalg.svd(g[bad], compute_uv=False)[:, 0]
        scale = model.q / norms
        sup = supports[lo:hi]
        ml = np.einsum("tsn,nt->ts", m, l_cols[:, lo:hi])
        w[sup.T, cols[lo:hi][None, :]] = (scale[:, None] * ml).T
        if moments:
            scaled_rows = (scale[:, None, None] * m).reshape(-1, n)
            np.add.at(mean_m, sup.reshape(-1), scaled_rows)
            h = scale[:, None, None] * g
            k = np.einsum("tsr,r,tur->tsu", h, lambdas, h)
            rows = np.broadcast_to(sup[:, :, None], (hi - lo, s, s))
            cols2 = np.broadcast_to(sup[:, None, :], (hi - lo, s, s))
            np.add.at(mean_mlm, (rows.ravel(), cols2.ravel()), k.ravel())
    if moments:
        mean_m /= alpha
        mean_mlm /= alpha
        return w, SddnMoments(mean_m=mean_m, mean_mlm=mean_mlm)
    return w, None


def apply_missing(l, support):
    """Zero the entries of l on the support: y = l - I_T I_T' l."""
    y = np.array(l, dtype=float, copy=True)
    support = np.asarray(support, dtype=int)
    if support.size:
        y[support] = 0.0
    return y


def apply_missing_batch(l_cols, supports):
    """Column-wise missing-data masking for a whole batch."""
    y = np.array(l_cols, dtype=float, copy=True)
    alpha = y.shape[1]
    y[supports.T, np.arange(alpha)[None, :]] = 0.0
    return y


@dataclass(frozen=True)
class DerivedSpectra:
    """Scalar spectra of one (signal, uncorrelated-noise) model pair.

    lambda_minus/lambda_plus/f describe the signal covariance restricted
    to its subspace; the four noise quantities are
    lambda_v_plus   = ||Sigma_v||_2,
    lambda_vP_minus = lambda_min(P' Sigma_v P),
    lambda_vrest_plus = lambda_max(Sigma_v - P P' Sigma_v P P'),
    lambda_vPPperp  = ||P_perp' Sigma_v P||_2,
    and g = max(lambda_v_plus/lambda_minus,
                sqrt(lambda_v_plus * f / lambda_minus)).
    """

    lambda_minus: float
    lambda_plus: float
    f: float
    lambda_v_plus: float = 0.0
    lambda_vP_minus: float = 0.0
    lambda_vrest_plus: float = 0.0
    lambda_vPPperp: float = 0.0
    g: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.lambda_minus <= 0 or self.lambda_plus < self.lambda_minus:
            raise ValidationError("need 0 < lambda_minus <= lambda_plus")
        if self.g is None:
            object.__setattr__(self, "g", self.noise_factor())

    def noise_factor(self):
        ratio = self.lambda_v_plus / self.lambda_minus
        return max(ratio, np.sqrt(ratio * self.f))


def derived_spectra(signal, noise=None):
    """Exact model spectra from the signal and (optional) noise covariance.

    Everything is computed from the model covariance Sigma_v, never from
    samples. noise=None means Sigma_v = 0.
    """
    lam_minus = signal.lambda_minus
    lam_plus = signal.lambda_plus
    if noise is None or float(np.max(noise.sigma2, initial=0.0)) == 0.0:
        return DerivedSpectra(lam_minus, lam_plus, lam_plus / lam_minus)
    sigma_v = noise.covariance()
    pe = signal.P.entries
    pvp = pe.T @ sigma_v @ pe
    lam_vp_minus = max(float(np.min(np.linalg.eigvalsh(pvp))), 0.0)
    proj = pe @ pvp @ pe.T
    lam_vrest = max(float(np.max(np.linalg.eigvalsh(sigma_v - proj))), 0.0)
    cross = sigma_v @ pe - pe @ pvp  # (I - PP') Sigma_v P
    lam_cross = float(np.linalg.norm(cross, 2))
    return DerivedSpectra(
        lambda_minus=lam_minus,
        lambda_plus=lam_plus,
        f=lam_plus / lam_minus,
        lambda_v_plus=noise.lambda_v_plus,
        lambda_vP_minus=lam_vp_minus,
        lambda_vrest_plus=lam_vrest,
        lambda_vPPperp=lam_cross,
    )


def signal_noise_eigenvalues(signal, noise=None):
    """Descending eigenvalues of Lambda + P' Sigma_v P (gap-condition input)."""
    lam = np.diag(signal.lambdas)
    if noise is not None:
        pe = signal.P.entries
        lam = lam + pe.T @ noise.covariance() @ pe
    return np.linalg.eigvalsh(lam)[::-1]
