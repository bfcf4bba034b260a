"""Gaussian-process regression with an anisotropic Matern-5/2 kernel.

Zero prior mean, per-output independent GPs, MLE hyperparameter fitting in
log space, and differentiable posterior evaluation (mean, standard
deviation, and their input gradients) as required by the scenario NLP.
Inputs and labels are standardized internally; all public results are in
raw units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .errors import ContractViolation, FactorizationError, FitError
from .sampling import latin_hypercube

__all__ = [
    "KernelHyperparams",
    "TrainingSet",
    "GpPosterior",
    "matern52",
    "log_marginal_likelihood",
    "fit_hyperparameters",
    "NOISE_FLOOR",
    "VARIANCE_CLAMP",
]

SQRT5 = float(np.sqrt(5.0))

#: Default (fixed) observation-noise variance in standardized label units.
#: Experiments are deterministic simulations, so noise stays at this floor.
NOISE_FLOOR = 1e-8

#: Posterior variance is clamped smoothly from below at this value so the
#: standard deviation stays differentiable at training points.
VARIANCE_CLAMP = 1e-10
_CLAMP_WIDTH = 1e-12

_JITTER0 = 1e-10
_JITTER_MAX = 1e-4

LOG_LENGTHSCALE_BOUNDS = (-5.0, 5.0)
LOG_SIGNAL_BOUNDS = (-6.0, 6.0)


@dataclass(frozen=True)
class KernelHyperparams:
    signal_variance: float
    lengthscales: np.ndarray
    noise_variance: float = NOISE_FLOOR

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if self.signal_variance <= 0 or np.any(ls <= 0):
            raise ContractViolation("signal variance and lengthscales must be positive")
        if self.noise_variance < 0:
            raise ContractViolation("noise variance must be non-negative")


def _smooth_clamp(v, floor=VARIANCE_CLAMP, width=_CLAMP_WIDTH):
    """Smooth max(v, floor); returns (clamped, d clamped / d v)."""
    d = v - floor
    s = np.sqrt(d * d + width * width)
    return 0.5 * (v + floor + s), 0.5 * (1.0 + d / s)


def matern52(a, b, hp: KernelHyperparams) -> float:
    """Matern-5/2 covariance between two input vectors."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.shape != hp.lengthscales.shape:
        raise ContractViolation("kernel input dimensions do not match hyperparameters")
    r = np.sqrt(np.sum(((a - b) / hp.lengthscales) ** 2))
    return float(hp.signal_variance * (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * np.exp(-SQRT5 * r))


def _kernel_matrix(A, B, sigma2, ls):
    diff = (A[:, None, :] - B[None, :, :]) / ls
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    r = np.sqrt(r2)
    return sigma2 * (1.0 + SQRT5 * r + 5.0 * r2 / 3.0) * np.exp(-SQRT5 * r), r


def _dk_dr2(sigma2, r):
    # d k / d r^2, finite at r = 0
    return sigma2 * (-5.0 / 6.0) * (1.0 + SQRT5 * r) * np.exp(-SQRT5 * r)


def _chol_with_jitter(K, noise):
    n = K.shape[0]
    jitter = 0.0
    while True:
        try:
            return (
                cholesky(K + (noise + jitter) * np.eye(n), lower=True),
                noise + jitter,
            )
        except np.linalg.LinAlgError:
            pass
        jitter = _JITTER0 if jitter == 0.0 else jitter * 2.0
        if jitter > _JITTER_MAX:
            raise FactorizationError(
                f"kernel matrix not positive definite at maximum jitter {_JITTER_MAX:g}"
            )


@dataclass
class Standardization:
    """Invertible affine map applied per input dimension and per label column."""

    input_mean: np.ndarray
    input_scale: np.ndarray
    label_mean: np.ndarray
    label_scale: np.ndarray

    def transform_inputs(self, X):
        return (X - self.input_mean) / self.input_scale

    def transform_labels(self, Y):
        return (Y - self.label_mean) / self.label_scale

    def to_dict(self):
        return {
            "input_mean": self.input_mean.tolist(),
            "input_scale": self.input_scale.tolist(),
            "label_mean": self.label_mean.tolist(),
            "label_scale": self.label_scale.tolist(),
        }


class TrainingSet:
    """Standardized training data; duplicate inputs are merged by label mean."""

    def __init__(self, inputs, labels, standardize_mask=None):
        X = np.atleast_2d(np.asarray(inputs, dtype=float))
        Y = np.asarray(labels, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] != Y.shape[0]:
            raise ContractViolation("inputs and labels must have the same number of rows")
        if X.shape[0] < 1:
            raise ContractViolation("training set needs at least one sample")
        mask = (
            np.ones(X.shape[1], dtype=bool)
            if standardize_mask is None
            else np.asarray(standardize_mask, dtype=bool)
        )
        if mask.shape != (X.shape[1],):
            raise ContractViolation("standardize mask length must equal input dimension")

        mean = np.where(mask, X.mean(axis=0), 0.0)
        scale = np.where(mask, X.std(axis=0), 1.0)
        scale = np.where(scale > 1e-12, scale, 1.0)
        lmean = Y.mean(axis=0)
        lscale = Y.std(axis=0)
        lscale = np.where(lscale > 1e-12, lscale, 1.0)
        self.standardization = Standardization(mean, scale, lmean, lscale)

        X01 = self.standardization.transform_inputs(X)
        groups: list[list[int]] = []
        for i in range(X01.shape[0]):
            for grp in groups:
                if np.max(np.abs(X01[grp[0]] - X01[i])) <= 1e-12:
                    grp.append(i)
                    break
            else:
                groups.append([i])
        keep = np.array([g[0] for g in groups])
        Xm = X[keep]
        Ym = np.vstack([Y[g].mean(axis=0) for g in groups])

        self.inputs = Xm
        self.labels = Ym
        self.inputs01 = self.standardization.transform_inputs(Xm)
        self.labels01 = self.standardization.transform_labels(Ym)
        self.standardize_mask = mask

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def input_dim(self):
        return self.inputs.shape[1]

    @property
    def output_dim(self):
        return self.labels.shape[1]


def log_marginal_likelihood(X01, y01, hp: KernelHyperparams):
    """Log marginal likelihood and its gradient w.r.t. log hyperparameters.

    Gradient ordering: (log lengthscale_1..D, log signal_variance). Noise is
    fixed and carries no gradient.
    """
    n = X01.shape[0]
    K, r = _kernel_matrix(X01, X01, hp.signal_variance, hp.lengthscales)
    L, _ = _chol_with_jitter(K, hp.noise_variance)
    alpha = cho_solve((L, True), y01)
    lml = (
        -0.5 * float(y01 @ alpha)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * n * np.log(2.0 * np.pi)
    )
    Kinv = cho_solve((L, True), np.eye(n))
    A = np.outer(alpha, alpha) - Kinv
    dk = _dk_dr2(hp.signal_variance, r)
    grad = np.empty(hp.lengthscales.size + 1)
    for d in range(hp.lengthscales.size):
        D2 = (X01[:, d, None] - X01[None, :, d]) ** 2
        dK = dk * (-2.0 * D2 / hp.lengthscales[d] ** 2)
        grad[d] = 0.5 * float(np.sum(A * dK))
    grad[-1] = 0.5 * float(np.sum(A * K))
    return lml, grad


def fit_hyperparameters(
    data: TrainingSet, n_starts: int, rng: np.random.Generator, output: int = 0
) -> KernelHyperparams:
    """Multi-start MLE fit of kernel hyperparameters for one output column."""
    if data.n < 2:
        raise ContractViolation("hyperparameter fitting needs at least two samples")
    if n_starts < 1:
        raise ContractViolation("n_starts must be at least 1")
    X01 = data.inputs01
    y01 = data.labels01[:, output]
    D = data.input_dim

    lo = np.array([LOG_LENGTHSCALE_BOUNDS[0]] * D + [LOG_SIGNAL_BOUNDS[0]])
    hi = np.array([LOG_LENGTHSCALE_BOUNDS[1]] * D + [LOG_SIGNAL_BOUNDS[1]])
    starts = latin_hypercube(n_starts, lo, hi, rng)
    # first start pinned at unit lengthscales / unit signal variance
    starts[0] = np.zeros_like(lo)

    def nll(theta):
        hp = KernelHyperparams(np.exp(theta[-1]), np.exp(theta[:-1]))
        try:
            lml, grad = log_marginal_likelihood(X01, y01, hp)
        except FactorizationError:
            return 1e12, np.zeros_like(theta)
        return -lml, -grad

    best = None
    diagnostics = []
    for theta0 in starts:
        res = minimize(
            nll,
            theta0,
            jac=True,
            method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"maxiter": 200},
        )
        converged = bool(res.success) and res.fun < 1e11
        diagnostics.append((tuple(theta0), res.status, float(res.fun)))
        if converged and (best is None or res.fun < best[0]):
            best = (float(res.fun), res.x.copy())
    if best is None:
        raise FitError("all hyperparameter fitting starts failed", diagnostics)
    theta = best[1]
    return KernelHyperparams(float(np.exp(theta[-1])), np.exp(theta[:-1]))


class _SingleGp:
    """One fitted scalar-output GP in standardized units."""

    def __init__(self, X01, y01, hp: KernelHyperparams):
        self.hp = hp
        self.X01 = X01
        K, _ = _kernel_matrix(X01, X01, hp.signal_variance, hp.lengthscales)
        self.L, self.effective_noise = _chol_with_jitter(K, hp.noise_variance)
        self.alpha = cho_solve((self.L, True), y01)

    def eval_many(self, Q01):
        """Mean, std, and input gradients at query rows (standardized units)."""
        hp = self.hp
        ls = hp.lengthscales
        diff = (Q01[:, None, :] - self.X01[None, :, :]) / ls
        r2 = np.einsum("ijk,ijk->ij", diff, diff)
        r = np.sqrt(r2)
        k = hp.signal_variance * (1.0 + SQRT5 * r + 5.0 * r2 / 3.0) * np.exp(-SQRT5 * r)
        mean = k @ self.alpha
        w = cho_solve((self.L, True), k.T)  # (N, S)
        var = hp.signal_variance - np.einsum("ij,ji->i", k, w)
        var_c, dclamp = _smooth_clamp(var)
        std = np.sqrt(var_c)

        dk = _dk_dr2(hp.signal_variance, r)  # (S, N)
        # d r^2 / d q01_d = 2 * diff_d / ls_d
        dkq = (dk[:, :, None] * 2.0 * diff / ls)  # (S, N, D)
        dmean = np.einsum("snd,n->sd", dkq, self.alpha)
        dvar = -2.0 * np.einsum("snd,ns->sd", dkq, w)
        dstd = dvar * (dclamp / (2.0 * std))[:, None]
        return mean, std, dmean, dstd


class GpPosterior:
    """Fitted multi-output GP (independent per output).

    Immutable after fitting; evaluation returns raw-unit quantities.
    """

    def __init__(self, training: TrainingSet, hyperparams: list[KernelHyperparams]):
        if len(hyperparams) != training.output_dim:
            raise ContractViolation("one hyperparameter set per output required")
        self.training = training
        self.hyperparams = hyperparams
        self._gps = [
            _SingleGp(training.inputs01, training.labels01[:, q], hp)
            for q, hp in enumerate(hyperparams)
        ]

    @classmethod
    def fit(cls, training: TrainingSet, n_starts: int, rng: np.random.Generator):
        hps = [
            fit_hyperparameters(training, n_starts, rng, output=q)
            for q in range(training.output_dim)
        ]
        return cls(training, hps)

    @property
    def input_dim(self):
        return self.training.input_dim

    @property
    def output_dim(self):
        return self.training.output_dim

    def posterior_eval_many(self, Q):
        """Evaluate mean/std and their input gradients at query rows.

        Returns ``(mean, std, dmean, dstd)`` with shapes (S, Q), (S, Q),
        (S, Q, D), (S, Q, D) in raw units.
        """
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[1] != self.input_dim:
            raise ContractViolation("query dimension does not match training inputs")
        st = self.training.standardization
        Q01 = st.transform_inputs(Q)
        S = Q.shape[0]
        nq = self.output_dim
        D = self.input_dim
        mean = np.empty((S, nq))
        std = np.empty((S, nq))
        dmean = np.empty((S, nq, D))
        dstd = np.empty((S, nq, D))
        for q, gp in enumerate(self._gps):
            m01, s01, dm01, ds01 = gp.eval_many(Q01)
            mean[:, q] = st.label_mean[q] + st.label_scale[q] * m01
            std[:, q] = st.label_scale[q] * s01
            dmean[:, q, :] = st.label_scale[q] * dm01 / st.input_scale
            dstd[:, q, :] = st.label_scale[q] * ds01 / st.input_scale
        return mean, std, dmean, dstd

    def posterior_eval(self, q):
        """Single-point version; squeezes the leading axis."""
        mean, std, dmean, dstd = self.posterior_eval_many(np.atleast_2d(q))
        return mean[0], std[0], dmean[0], dstd[0]

    def reparameterized_draw(self, q, xi):
        """y = mean(q) + diag(std(q)) @ xi for a standard-normal xi."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        mean, std, _, _ = self.posterior_eval(q)
        if xi.shape != mean.shape:
            raise ContractViolation("xi dimension must equal the number of outputs")
        return mean + std * xi

    # checkpoint serialization -------------------------------------------------

    def to_dict(self):
        return {
            "inputs": self.training.inputs.tolist(),
            "labels": self.training.labels.tolist(),
            "standardize_mask": self.training.standardize_mask.tolist(),
            "hyperparams": [
                {
                    "signal_variance": hp.signal_variance,
                    "lengthscales": hp.lengthscales.tolist(),
                    "noise_variance": hp.noise_variance,
                }
                for hp in self.hyperparams
            ],
        }

    @classmethod
    def from_dict(cls, payload):
        training = TrainingSet(
            np.asarray(payload["inputs"], dtype=float),
            np.asarray(payload["labels"], dtype=float),
            np.asarray(payload["standardize_mask"], dtype=bool),
        )
        hps = [
            KernelHyperparams(
                h["signal_variance"], np.asarray(h["lengthscales"]), h["noise_variance"]
            )
            for h in payload["hyperparams"]
        ]
        return cls(training, hps)
