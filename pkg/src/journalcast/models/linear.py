"""Ordinary least squares with an intercept."""

from __future__ import annotations

import numpy as np


class LinearRegression:
    def __init__(self, coef=None, intercept=0.0):
        self.coef = None if coef is None else np.asarray(coef, dtype=float)
        self.intercept = float(intercept)

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        A = np.hstack([X, np.ones((X.shape[0], 1))])
        sol, *_ = np.linalg.lstsq(A, y, rcond=None)
        self.coef = sol[:-1]
        self.intercept = float(sol[-1])
        return self

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.coef + self.intercept

    def state(self):
        return {"coef": self.coef, "intercept": np.array([self.intercept])}

    @classmethod
    def from_state(cls, s):
        return cls(s["coef"], float(s["intercept"][0]))
