# Copyright 2019 The marginfit authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

""" Multinomial log-likelihood, score and information.

With canonical parameters theta, the multinomial log-likelihood is
l(theta) = y' G theta - n log(1' exp(G theta)), with score
s = G'(y - n pi) and expected information F = n G' Omega G, where
Omega = diag(pi) - pi pi'.
"""
from __future__ import absolute_import

import numpy as np
from scipy import linalg
from scipy.special import logsumexp
from traitlets import HasTraits, Float, Instance

from .errors import ConditioningError, SingularModelError
from .mllp import eta_jacobian, invert_jacobian, margins_of
from .table import theta_to_pi

# Step of the central differences used by the numeric fallbacks.
FD_STEP = 1e-6


class LikelihoodParts(HasTraits):
    """ Log-likelihood, score and expected information at a point.
    """

    loglik = Float()

    # Score with respect to theta, length t-1.
    score = Instance(np.ndarray)

    # Expected information with respect to theta, (t-1) x (t-1).
    info = Instance(np.ndarray)

    # Cell probabilities at the point.
    pi = Instance(np.ndarray)

    # Total count.
    n = Float()

    @property
    def omega(self):
        """ Multinomial covariance kernel diag(pi) - pi pi'.
        """
        return np.diag(self.pi) - np.outer(self.pi, self.pi)


def loglik(theta, y, basis):
    """ Multinomial log-likelihood in terms of the canonical parameters.
    """
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ConditioningError("Canonical parameters must be finite")
    y = np.asarray(y, dtype=float)
    g = basis.G.dot(theta)
    return float(y.dot(g) - y.sum() * logsumexp(g))


def score_and_info(theta, y, basis):
    """ Log-likelihood, score and expected information at theta.
    """
    y = np.asarray(y, dtype=float)
    n = y.sum()
    pi = theta_to_pi(theta, basis)
    G = basis.G
    score = G.T.dot(y - n * pi)
    Gpi = G.T.dot(pi)
    info = n * ((G.T * pi).dot(G) - np.outer(Gpi, Gpi))
    return LikelihoodParts(loglik=loglik(theta, y, basis), score=score,
                           info=info, pi=pi, n=n)


def explicit_F_inverse(pi, n, basis=None):
    """ Closed-form inverse of the expected information for the default
    basis (G the identity with its first column removed):

        F^-1 = n^-1 [diag(pi.)^-1 + 1 1' / (1 - 1' pi.)]

    where pi. is pi without its first entry.
    """
    if basis is not None and not basis.is_default:
        raise ValueError("The explicit inverse of F holds only for the "
                         "default canonical basis")
    pi = np.asarray(pi, dtype=float)
    rest = pi[1:]
    first = 1.0 - rest.sum()
    if first <= 0 or np.any(rest <= 0):
        raise ConditioningError("Explicit inverse of F needs interior pi")
    k = len(rest)
    return (np.diag(1.0 / rest) + np.ones((k, k)) / first) / n


def info_solve(parts, B, basis):
    """ Solve F X = B for X, via the explicit inverse when the basis allows.
    """
    if basis.is_default:
        return explicit_F_inverse(parts.pi, parts.n).dot(B)
    try:
        factor = linalg.cho_factor(parts.info)
    except linalg.LinAlgError:
        raise SingularModelError("Expected information is not positive "
                                 "definite")
    return linalg.cho_solve(factor, B)


def diag_product_jacobian(A, b, dy_du, du_dx):
    """ Derivative of diag(A y) b with respect to x', for constant A and b:

        d/dx' diag(A y) b = diag(b) A (dy/du') (du/dx').
    """
    return (np.asarray(b)[:, np.newaxis] * A).dot(dy_du).dot(du_dx)


def beta_score(theta, y, matrices, basis, X):
    """ Score with respect to beta for the model eta = X beta,
    X' R' G'(y - n pi).
    """
    parts = score_and_info(theta, y, basis)
    R = invert_jacobian(eta_jacobian(matrices, basis, parts.pi))
    return X.T.dot(R.T.dot(parts.score))


def observed_info(theta, y, matrices, basis, X):
    """ Observed information with respect to beta, for eta = X beta, at the
    point theta corresponding to beta.

    The negative Hessian of l(theta(beta)) splits into the expected
    information X'R'FRX and a correction from differentiating R, which is
    X'R'G' [diag(M' diag(M pi)^-1 C'b)
            - diag(pi) M' diag(C'b) diag(M pi)^-2 M] Omega G R X
    with b = R'G'(y - n pi). The correction vanishes at the unconstrained
    maximum, where y = n pi.
    """
    y = np.asarray(y, dtype=float)
    parts = score_and_info(theta, y, basis)
    pi, G, C, M = parts.pi, basis.G, matrices.C, matrices.M
    m = margins_of(matrices, pi)
    R = invert_jacobian(eta_jacobian(matrices, basis, pi))
    RX = R.dot(X)

    c = C.T.dot(R.T.dot(parts.score))
    omega_G = parts.omega.dot(G)
    identity_t = np.eye(len(pi))
    w = M.T.dot(c / m)
    # Two applications of the derivative identity: once for pi, once for
    # the reciprocal margins 1 / (M pi).
    d_pi = diag_product_jacobian(identity_t, w, identity_t, omega_G)
    d_recip = diag_product_jacobian(np.eye(len(m)), c, -np.diag(m ** -2),
                                    M.dot(omega_G))
    bracket = d_pi + (pi[:, np.newaxis] * M.T).dot(d_recip)

    expected = RX.T.dot(parts.info).dot(RX)
    correction = RX.T.dot(G.T).dot(bracket).dot(RX)
    return expected + correction


def numeric_jacobian(func, x, step=FD_STEP):
    """ Central-difference Jacobian of a vector-valued function.
    """
    x = np.asarray(x, dtype=float)
    columns = []
    for k in range(len(x)):
        dx = np.zeros_like(x)
        dx[k] = step
        columns.append((np.asarray(func(x + dx)) -
                        np.asarray(func(x - dx))) / (2 * step))
    if not columns:
        return np.zeros((len(np.atleast_1d(func(x))), 0))
    return np.column_stack(columns)


def observed_info_numeric(gradient, x, step=FD_STEP):
    """ Observed information as the symmetrized negative central-difference
    Jacobian of a gradient function.
    """
    J = -numeric_jacobian(gradient, x, step)
    return (J + J.T) / 2
