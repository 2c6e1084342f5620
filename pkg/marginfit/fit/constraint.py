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

""" Constraints defining marginal models.

A model is given either by linear constraints K' eta = 0, by a design
eta = X beta with K'X = 0, or by general constraints A log(M pi) = 0 on
marginal probabilities (e.g., relational models).
"""
from __future__ import absolute_import

import numpy as np
from scipy import linalg
from traitlets import HasTraits, Enum, Instance, List, Unicode

from ..core.errors import ConditioningError, RankDeficientError, \
    SingularModelError
from ..core.mllp import MARGIN_FLOOR, marginal_matrix, margins_of

# Relative tolerance for rank decisions from pivoted QR.
RANK_TOL = 1e-10


class ModelConstraint(HasTraits):
    """ Constraints of a marginal model.

    Use the constructors `linear`, `design`, `zeroed`, `unconstrained` and
    `general` rather than setting the traits directly.
    """

    kind = Enum(['linear', 'design', 'general'])

    # (t-1) x r constraint matrix; derived from X for designs.
    K = Instance(np.ndarray, allow_none=True)

    # (t-1) x (t-1-r) design matrix; derived from K for linear constraints.
    X = Instance(np.ndarray, allow_none=True)

    # r x u' matrix of a general constraint A log(M pi) = 0.
    A = Instance(np.ndarray, allow_none=True)

    # u' x t marginalization matrix of a general constraint.
    M = Instance(np.ndarray, allow_none=True)

    # Names of the columns of X, for reports and diagnostics.
    beta_labels = List(Unicode())

    @property
    def r(self):
        """ Number of constraints.
        """
        if self.kind == 'general':
            return self.A.shape[0]
        return self.K.shape[1]

    @classmethod
    def linear(cls, K):
        """ Linear constraints K' eta = 0.
        """
        K = _as_matrix(K)
        check_column_rank(K, 'K')
        X = null_space_X(K)
        return cls(kind='linear', K=K, X=X,
                   beta_labels=['b%d' % (k+1) for k in range(X.shape[1])])

    @classmethod
    def design(cls, X, beta_labels=None):
        """ Regression model eta = X beta.
        """
        X = _as_matrix(X)
        check_column_rank(X, 'X')
        K = null_space_X(X)
        if beta_labels is None:
            beta_labels = ['b%d' % (k+1) for k in range(X.shape[1])]
        return cls(kind='design', K=K, X=X, beta_labels=list(beta_labels))

    @classmethod
    def zeroed(cls, model, names):
        """ Constrain the named effects or coordinates of eta to zero.

        The design is then a selection of the free coordinates, so that
        beta is the vector of unconstrained eta coordinates.
        """
        zero = sorted({k for name in names
                       for k in model.effect_coordinates(name)})
        free = [k for k in range(model.t-1) if k not in zero]
        identity = np.eye(model.t-1)
        return cls(kind='design', K=identity[:, zero], X=identity[:, free],
                   beta_labels=[model.labels[k] for k in free])

    @classmethod
    def unconstrained(cls, model):
        """ The saturated model: no constraints, X the identity.
        """
        return cls.zeroed(model, [])

    @classmethod
    def general(cls, A, M=None, schema=None, margins=None):
        """ General constraints A log(M pi) = 0.

        M may be given directly or through a schema and a list of margins.
        """
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if M is None:
            M = marginal_matrix(schema, margins)
        M = np.asarray(M, dtype=float)
        if A.shape[1] != M.shape[0]:
            raise RankDeficientError(
                "A has %d columns but the margins have %d cells"
                % (A.shape[1], M.shape[0]))
        check_column_rank(A.T, 'A transposed')
        return cls(kind='general', A=A, M=M)


def _as_matrix(K):
    K = np.asarray(K, dtype=float)
    return K[:, np.newaxis] if K.ndim == 1 else K


def column_rank(K):
    """ Numerical column rank from a pivoted QR factorization.
    """
    if K.shape[1] == 0:
        return 0
    _, R, _ = linalg.qr(K, mode='economic', pivoting=True)
    diag = np.abs(np.diag(R))
    if not len(diag) or diag[0] == 0:
        return 0
    return int(np.sum(diag > RANK_TOL * diag[0]))


def check_column_rank(K, name):
    rank = column_rank(K)
    if rank < K.shape[1]:
        raise RankDeficientError(
            "%s has %d columns but rank %d; it must have full column rank"
            % (name, K.shape[1], rank))


def null_space_X(K):
    """ Orthonormal basis X of the orthogonal complement of the columns of K,
    so that K'X = 0 and [K X] spans the whole space.
    """
    K = _as_matrix(K)
    p, r = K.shape
    if r == 0:
        return np.eye(p)
    check_column_rank(K, 'K')
    Q, _ = linalg.qr(K, mode='full')
    return Q[:, r:]


def right_inverse(Kt):
    """ Right inverse K (K'K)^-1 of a full-row-rank matrix K'.
    """
    K = Kt.T
    return K.dot(linalg.solve(Kt.dot(K), np.eye(Kt.shape[0]),
                              assume_a='pos'))


def constraint_h_and_H(theta, constraint, model):
    """ Constraint values h(theta) and their derivative H = dh'/dtheta.

    For linear constraints H' = K'C diag(M pi)^-1 M diag(pi) G, with the
    fixed product K'C cached on the model. For general constraints
    H' = A diag(M pi)^-1 M Omega G: A need not be a contrast matrix, so
    Omega cannot be replaced by diag(pi).
    """
    pi = model.pi(theta)
    G = model.basis.G
    if constraint.kind == 'general':
        m = constraint.M.dot(pi)
        if np.any(m < MARGIN_FLOOR):
            raise ConditioningError(
                "Marginal probability %.3g below the floor %g"
                % (m.min(), MARGIN_FLOOR))
        h = constraint.A.dot(np.log(m))
        omega_G = pi[:, np.newaxis] * G - np.outer(pi, pi.dot(G))
        Ht = (constraint.A / m[np.newaxis, :]).dot(constraint.M).dot(omega_G)
    else:
        M = model.matrices.M
        m = margins_of(model.matrices, pi)
        KC = model.constraint_KC(constraint.K)
        h = KC.dot(np.log(m))
        Ht = KC.dot(M * pi[np.newaxis, :] / m[:, np.newaxis]).dot(G)
    H = Ht.T
    if H.shape[1] and np.linalg.matrix_rank(H) < H.shape[1]:
        raise SingularModelError(
            "Constraint derivative H has rank %d < %d: the model is not "
            "smooth at this point" % (np.linalg.matrix_rank(H), H.shape[1]))
    return h, H
