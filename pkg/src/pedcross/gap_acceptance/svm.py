"""Soft-margin kernel SVM trained by SMO, plus Platt sigmoid calibration.

The dual problem

    min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K_ij

is solved with two-variable SMO steps and second-order working-set
selection. The whole kernel matrix is cached, which is fine for the few
thousand gap events this package deals with.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TAU = 1e-12


class ConvergenceError(RuntimeError):
    pass


def poly_kernel(A: np.ndarray, B: np.ndarray, gamma: float, coef0: float = 1.0,
                degree: int = 3) -> np.ndarray:
    return (gamma * (A @ B.T) + coef0) ** degree


@dataclass
class KernelSVM:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for each support vector
    bias: float
    gamma: float
    coef0: float = 1.0
    degree: int = 3
    C: float = 1.0
    n_iter: int = 0

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(self.dual_coef) == 0:
            return np.full(len(X), self.bias)
        K = poly_kernel(X, self.support_vectors, self.gamma, self.coef0, self.degree)
        return K @ self.dual_coef + self.bias


def _solve_dual(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int):
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient Q a - e
    diagK = np.diag(K).copy()
    pos = y > 0
    for it in range(max_iter):
        neg_yG = -y * G
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        if not up.any() or not low.any():
            return alpha, G, it
        i = int(np.argmax(np.where(up, neg_yG, -np.inf)))
        m = neg_yG[i]
        M = np.min(np.where(low, neg_yG, np.inf))
        if m - M < tol:
            return alpha, G, it
        b = m - neg_yG
        a = diagK[i] + diagK - 2.0 * K[i]
        a = np.where(a > 0, a, TAU)
        cand = low & (b > 0)
        j = int(np.argmin(np.where(cand, -(b * b) / a, np.inf)))

        Ki, Kj = K[i], K[j]
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(diagK[i] + diagK[j] - 2.0 * Ki[j], TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = max(diagK[i] + diagK[j] - 2.0 * Ki[j], TAU)
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        # G += Q[:, i] d_i + Q[:, j] d_j with Q[:, k] = y * y_k * K[:, k]
        G += y * (y[i] * (ai - ai_old) * Ki + y[j] * (aj - aj_old) * Kj)
    raise ConvergenceError(f"SMO did not converge within {max_iter} iterations")


def _offset(alpha: np.ndarray, G: np.ndarray, y: np.ndarray, C: float) -> float:
    """Threshold rho with decision f(x) = sum a_i y_i K(x_i, x) - rho."""
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(np.mean(yG[free]))
    pos = y > 0
    at_upper = alpha >= C
    at_lower = alpha <= 0
    # bounds on rho from the KKT conditions of the bounded variables
    ub_mask = (at_upper & ~pos) | (at_lower & pos)
    lb_mask = (at_upper & pos) | (at_lower & ~pos)
    ub = np.min(yG[ub_mask]) if ub_mask.any() else np.inf
    lb = np.max(yG[lb_mask]) if lb_mask.any() else -np.inf
    if np.isfinite(ub) and np.isfinite(lb):
        return float(0.5 * (ub + lb))
    return float(ub if np.isfinite(ub) else lb)


def fit_svm(X: np.ndarray, y01: np.ndarray, C: float = 1.0, gamma: float = None,
            coef0: float = 1.0, degree: int = 3, tol: float = 1e-7,
            max_iter: int = 1_000_000) -> KernelSVM:
    """Train on features ``X`` and 0/1 labels ``y01`` (1 = positive class)."""
    X = np.asarray(X, dtype=float)
    y = np.where(np.asarray(y01) > 0, 1.0, -1.0)
    if len(np.unique(y)) < 2:
        raise ValueError("training set contains a single class")
    if gamma is None:
        var = X.var()
        gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
    K = poly_kernel(X, X, gamma, coef0, degree)
    alpha, G, n_iter = _solve_dual(K, y, C, tol, max_iter)
    rho = _offset(alpha, G, y, C)
    sv = alpha > 0
    return KernelSVM(support_vectors=X[sv].copy(), dual_coef=(alpha * y)[sv],
                     bias=-rho, gamma=float(gamma), coef0=coef0, degree=degree,
                     C=C, n_iter=n_iter)


def platt_probability(decision, A: float, B: float) -> np.ndarray:
    """Sigmoid 1 / (1 + exp(A s + B)), evaluated without overflow."""
    z = A * np.asarray(decision, dtype=float) + B
    out = np.empty_like(z)
    pos = z >= 0
    ez = np.exp(-z[pos])
    out[pos] = ez / (1.0 + ez)
    out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    return out


def fit_platt(decision: np.ndarray, y01: np.ndarray, max_iter: int = 100,
              min_step: float = 1e-10, sigma: float = 1e-12, eps: float = 1e-5):
    """Fit (A, B) by Newton's method with backtracking on regularized targets.

    Targets are (n+ + 1)/(n+ + 2) and 1/(n- + 2) rather than 1 and 0, which
    keeps the fit finite on separable decision values.
    """
    f = np.asarray(decision, dtype=float)
    y = np.asarray(y01) > 0
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    t = np.where(y, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def objective(A, B):
        z = f * A + B
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-np.abs(z))),
                                     (t - 1) * z + np.log1p(np.exp(-np.abs(z))))))

    A, B = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    fval = objective(A, B)
    for _ in range(max_iter):
        p = platt_probability(f, A, B)
        q = 1.0 - p
        d2 = p * q
        h11 = sigma + np.sum(f * f * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1 = np.sum(f * d1)
        g2 = np.sum(d1)
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            newA, newB = A + step * dA, B + step * dB
            newf = objective(newA, newB)
            if newf < fval + 1e-4 * step * gd:
                A, B, fval = newA, newB, newf
                break
            step /= 2.0
        else:
            break
    return float(A), float(B)
