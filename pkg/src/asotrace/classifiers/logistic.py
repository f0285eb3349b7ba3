"""L2-regularised logistic regression fitted with L-BFGS."""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize


def loss_and_grad(w: np.ndarray, X: np.ndarray, y: np.ndarray, C: float) -> tuple[float, np.ndarray]:
    """Negative log-likelihood plus ``||w[1:]||^2 / (2C)``; ``w[0]`` is the unpenalised intercept."""
    z = w[0] + X @ w[1:]
    loss = float(np.sum(np.logaddexp(0.0, z) - y * z)) + 0.5 / C * float(w[1:] @ w[1:])
    r = 0.5 * (1.0 + np.tanh(0.5 * z)) - y  # sigmoid(z) - y, overflow-free
    grad = np.empty_like(w)
    grad[0] = r.sum()
    grad[1:] = X.T @ r + w[1:] / C
    return loss, grad


class LogisticRegression:
    """Features are standardised with the training mean and SD before fitting."""

    name = "logistic_regression"

    def __init__(self, C: float = 1.0, max_iter: int = 1000, tol: float = 1e-8, seed: int = 0):
        if C <= 0:
            raise ValueError("C must be positive")
        self.C = C
        self.max_iter = max_iter
        self.tol = tol
        self.seed = seed  # unused: the fit is deterministic
        self.mean: np.ndarray | None = None
        self.scale: np.ndarray | None = None
        self.coef: np.ndarray | None = None

    def params(self) -> dict:
        return {"C": self.C, "max_iter": self.max_iter, "tol": self.tol, "seed": self.seed}

    def _standardise(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LogisticRegression":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale = np.where(sd > 0, sd, 1.0)
        Z = self._standardise(X)
        w0 = np.zeros(X.shape[1] + 1)
        res = minimize(loss_and_grad, w0, args=(Z, y, self.C), jac=True, method="L-BFGS-B",
                       options={"maxiter": self.max_iter, "gtol": self.tol, "ftol": 1e-15})
        self.coef = res.x
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        if self.coef is None:
            raise RuntimeError("model is not fitted")
        return self.coef[0] + self._standardise(X) @ self.coef[1:]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return 0.5 * (1.0 + np.tanh(0.5 * self.decision_function(X)))

    def get_arrays(self) -> dict[str, np.ndarray]:
        return {"mean": self.mean, "scale": self.scale, "coef": self.coef}

    def set_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.mean, self.scale, self.coef = arrays["mean"], arrays["scale"], arrays["coef"]
