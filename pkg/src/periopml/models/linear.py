"""L2-regularised logistic regression, Gaussian/Bernoulli naive Bayes, one-hidden-layer MLP."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..ingest import SCALED
from .base import LOG_ODDS, TrainedModel
from .params import LogisticParams, MLPParams, NaiveBayesParams


# --- logistic -----------------------------------------------------------------

def logistic_loss(theta: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float) -> float:
    """Mean negative log-likelihood plus ``lam/2 * ||w||^2``; ``theta = [w, b]``."""
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * (w @ w))


def logistic_gradient(theta: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    w, b = theta[:-1], theta[-1]
    r = expit(X @ w + b) - y
    n = X.shape[0]
    return np.concatenate([X.T @ r / n + lam * w, [r.sum() / n]])


def _logistic_hessian(theta, X, lam):
    w, b = theta[:-1], theta[-1]
    p = expit(X @ w + b)
    d = p * (1.0 - p)
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    Hm = (Xa * d[:, None]).T @ Xa / X.shape[0]
    Hm[:-1, :-1] += lam * np.eye(X.shape[1])
    return Hm


class LogisticModel(TrainedModel):
    family = "logistic"
    output_space = LOG_ODDS

    def __init__(self, params, columns, roles, coef, intercept, n_iter=0, converged=True):
        super().__init__(params, columns, roles)
        self.coef = np.asarray(coef, dtype=np.float64)
        self.intercept = float(intercept)
        self.n_iter = n_iter
        self.converged = converged

    def _decision(self, X):
        return X @ self.coef + self.intercept

    @property
    def complexity(self):
        return self.coef.size + 1

    def _state(self):
        return {"coef": self.coef.tolist(), "intercept": self.intercept,
                "n_iter": self.n_iter, "converged": self.converged}

    @classmethod
    def _from_state(cls, params, columns, roles, s):
        return cls(params, columns, roles, s["coef"], s["intercept"], s.get("n_iter", 0), s.get("converged", True))


def fit_logistic(X, y, params: LogisticParams, columns, roles) -> LogisticModel:
    """Damped Newton: full step, halved until the objective does not increase."""
    lam = params.l2_lambda
    prior = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    theta = np.zeros(X.shape[1] + 1)
    theta[-1] = np.log(prior / (1 - prior))
    f = logistic_loss(theta, X, y, lam)
    converged = False
    it = 0
    for it in range(1, params.max_iter + 1):
        grad = logistic_gradient(theta, X, y, lam)
        if np.linalg.norm(grad) <= params.tol:
            converged = True
            break
        Hm = _logistic_hessian(theta, X, lam)
        try:
            step = np.linalg.solve(Hm, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(Hm, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            step = grad
        t = 1.0
        for _ in range(40):
            cand = theta - t * step
            fc = logistic_loss(cand, X, y, lam)
            if fc <= f:
                break
            t *= 0.5
        else:
            converged = True  # no descent possible at machine precision
            break
        theta, f = cand, fc
    return LogisticModel(params, columns, roles, theta[:-1], theta[-1], it, converged)


# --- naive Bayes --------------------------------------------------------------

class NaiveBayesModel(TrainedModel):
    family = "naive_bayes"
    output_space = LOG_ODDS

    def __init__(self, params, columns, roles, log_prior, mean, var, theta):
        super().__init__(params, columns, roles)
        self.log_prior = np.asarray(log_prior, dtype=np.float64)  # (2,)
        self.mean = np.asarray(mean, dtype=np.float64)  # (2, p)
        self.var = np.asarray(var, dtype=np.float64)
        self.theta = np.asarray(theta, dtype=np.float64)
        self.gaussian = np.array([r == SCALED for r in self.roles])

    def _class_loglik(self, X, c):
        if not np.isfinite(self.log_prior[c]):
            return np.full(X.shape[0], -np.inf)
        out = np.full(X.shape[0], self.log_prior[c])
        gm = self.gaussian
        if gm.any():
            mu, v = self.mean[c, gm], self.var[c, gm]
            out += np.sum(-0.5 * np.log(2 * np.pi * v) - 0.5 * (X[:, gm] - mu) ** 2 / v, axis=1)
        bm = ~gm
        if bm.any():
            th = self.theta[c, bm]
            out += X[:, bm] @ np.log(th) + (1.0 - X[:, bm]) @ np.log1p(-th)
        return out

    def _decision(self, X):
        l1, l0 = self._class_loglik(X, 1), self._class_loglik(X, 0)
        with np.errstate(invalid="ignore"):
            d = l1 - l0
        # single-class training: constant certainty toward the observed class
        return np.where(np.isnan(d), 0.0, d)

    @property
    def complexity(self):
        return int(2 * (2 * self.gaussian.sum() + (~self.gaussian).sum()) + 2)

    def _state(self):
        return {"log_prior": [None if not np.isfinite(v) else float(v) for v in self.log_prior],
                "mean": self.mean.tolist(), "var": self.var.tolist(), "theta": self.theta.tolist()}

    @classmethod
    def _from_state(cls, params, columns, roles, s):
        lp = [-np.inf if v is None else v for v in s["log_prior"]]
        return cls(params, columns, roles, lp, s["mean"], s["var"], s["theta"])


def fit_naive_bayes(X, y, params: NaiveBayesParams, columns, roles) -> NaiveBayesModel:
    p = X.shape[1]
    mean = np.zeros((2, p))
    var = np.ones((2, p))
    theta = np.full((2, p), 0.5)
    log_prior = np.full(2, -np.inf)
    a = params.laplace_alpha
    for c in (0, 1):
        Xc = X[y == c]
        if Xc.shape[0] == 0:
            continue
        log_prior[c] = np.log(Xc.shape[0] / X.shape[0])
        mean[c] = Xc.mean(axis=0)
        var[c] = np.maximum(Xc.var(axis=0), params.var_floor)
        theta[c] = (Xc.sum(axis=0) + a) / (Xc.shape[0] + 2 * a)
    theta = np.clip(theta, 1e-12, 1 - 1e-12)
    return NaiveBayesModel(params, columns, roles, log_prior, mean, var, theta)


# --- MLP ----------------------------------------------------------------------

def _unpack(theta, p, k):
    i = 0
    W1 = theta[i:i + p * k].reshape(p, k); i += p * k
    b1 = theta[i:i + k]; i += k
    w2 = theta[i:i + k]; i += k
    return W1, b1, w2, theta[i]


def mlp_loss_grad(theta, X, y, lam, hidden) -> tuple[float, np.ndarray]:
    """Loss and backprop gradient for the flat parameter vector ``[W1, b1, w2, b2]``."""
    n, p = X.shape
    W1, b1, w2, b2 = _unpack(theta, p, hidden)
    a = X @ W1 + b1
    r = np.maximum(a, 0.0)
    z = r @ w2 + b2
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * (np.sum(W1 * W1) + w2 @ w2))
    dz = (expit(z) - y) / n
    dw2 = r.T @ dz + lam * w2
    da = np.outer(dz, w2) * (a > 0)
    dW1 = X.T @ da + lam * W1
    grad = np.concatenate([dW1.ravel(), da.sum(axis=0), dw2, [dz.sum()]])
    return loss, grad


def mlp_init(p: int, hidden: int, rng: np.random.Generator) -> np.ndarray:
    l1 = np.sqrt(6.0 / (p + hidden))
    l2 = np.sqrt(6.0 / (hidden + 1))
    return np.concatenate([rng.uniform(-l1, l1, p * hidden), np.zeros(hidden),
                           rng.uniform(-l2, l2, hidden), [0.0]])


class MLPModel(TrainedModel):
    family = "mlp"
    output_space = LOG_ODDS

    def __init__(self, params, columns, roles, theta):
        super().__init__(params, columns, roles)
        self.theta = np.asarray(theta, dtype=np.float64)

    def _decision(self, X):
        W1, b1, w2, b2 = _unpack(self.theta, X.shape[1], self.params.hidden_width)
        return np.maximum(X @ W1 + b1, 0.0) @ w2 + b2

    @property
    def complexity(self):
        return int(self.theta.size)

    def _state(self):
        return {"theta": self.theta.tolist()}

    @classmethod
    def _from_state(cls, params, columns, roles, s):
        return cls(params, columns, roles, s["theta"])


def fit_mlp(X, y, params: MLPParams, columns, roles, seed: int) -> MLPModel:
    """Plain mini-batch SGD with a per-epoch shuffle."""
    rng = np.random.default_rng(seed)
    n, p = X.shape
    theta = mlp_init(p, params.hidden_width, rng)
    bs = params.batch_size
    for _ in range(params.epochs):
        perm = rng.permutation(n)
        for s in range(0, n, bs):
            idx = perm[s:s + bs]
            _, grad = mlp_loss_grad(theta, X[idx], y[idx], params.l2_lambda, params.hidden_width)
            theta = theta - params.learning_rate * grad
    return MLPModel(params, columns, roles, theta)
