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

""" Contingency-table schema and the canonical log-linear coordinates.

Cells are indexed lexicographically with the *last* variable varying fastest
(C order), so that cell (i_1, ..., i_d) has flat index
`numpy.ravel_multi_index((i_1, ..., i_d), dims)`. All marginalization and
contrast matrices in the package follow this convention.

Probability vectors are plain one-dimensional numpy arrays in the numerical
routines. `ProbVector` and `CountVector` validate data at the boundary of
the library (data files, user input).
"""
from __future__ import absolute_import

import numpy as np
from scipy.special import logsumexp
from traitlets import HasTraits, Bool, Instance, Int, List, Unicode, \
    default, validate

from .errors import ConditioningError, SchemaError

# Absolute tolerance on the total probability of a `ProbVector`.
PROB_SUM_TOL = 1e-12


class TableSchema(HasTraits):
    """ Schema of a contingency table: variables and their category counts.
    """

    # Number of categories of each variable, each at least 2.
    dims = List(Int())

    # Variable names, defaulting to 'X1', 'X2', ....
    names = List(Unicode())

    @property
    def d(self):
        """ Number of variables.
        """
        return len(self.dims)

    @property
    def t(self):
        """ Number of cells.
        """
        return int(np.prod(self.dims))

    @property
    def cells(self):
        """ Array of shape (t, d) listing the cell tuples in flat order.

        Levels are zero-based.
        """
        grid = np.indices(self.dims).reshape(self.d, -1)
        return grid.T.copy()

    def cell_index(self, cell):
        """ Flat index of a (zero-based) cell tuple.
        """
        cell = tuple(int(i) for i in cell)
        if len(cell) != self.d or any(
                not 0 <= i < c for i, c in zip(cell, self.dims)):
            raise SchemaError("Cell %r outside table of shape %r"
                              % (cell, tuple(self.dims)))
        return int(np.ravel_multi_index(cell, self.dims))

    def cell_tuple(self, index):
        """ Zero-based cell tuple of a flat index.
        """
        if not 0 <= index < self.t:
            raise SchemaError("Cell index %r outside table with %d cells"
                              % (index, self.t))
        return tuple(int(i) for i in np.unravel_index(index, self.dims))

    def variable_index(self, name):
        """ Position of the variable with the given name.
        """
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError("Unknown variable %r" % name)

    # Trait validators and initializers

    @validate('dims')
    def _validate_dims(self, proposal):
        dims = proposal['value']
        if not dims:
            raise SchemaError("A table needs at least one variable")
        bad = [c for c in dims if c < 2]
        if bad:
            raise SchemaError(
                "Every variable needs at least 2 categories, got %r" % dims)
        return dims

    @default('names')
    def _names_default(self):
        return ['X%d' % (j+1) for j in range(len(self.dims))]


class ProbVector(HasTraits):
    """ Vector of strictly positive cell probabilities summing to one.
    """

    values = Instance(np.ndarray)

    @validate('values')
    def _validate_values(self, proposal):
        values = np.asarray(proposal['value'], dtype=float)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise ConditioningError("Probabilities must be a finite vector")
        if np.any(values <= 0):
            raise ConditioningError(
                "Probabilities must be strictly positive "
                "(a zero signals an estimate on the boundary)")
        if abs(values.sum() - 1) > PROB_SUM_TOL:
            raise ConditioningError(
                "Probabilities sum to %r, not 1" % values.sum())
        return values


class CountVector(HasTraits):
    """ Vector of nonnegative cell counts.
    """

    values = Instance(np.ndarray)

    @property
    def n(self):
        """ Total count.
        """
        return float(self.values.sum())

    @validate('values')
    def _validate_values(self, proposal):
        values = np.asarray(proposal['value'], dtype=float)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise SchemaError("Counts must be a finite vector")
        if np.any(values < 0):
            raise SchemaError("Counts must be nonnegative")
        return values


class CanonicalBasis(HasTraits):
    """ Design matrix G and contrast matrix L of the canonical parameters.

    Satisfies L G = I and each row of L sums to zero, so that
    log(pi) = G theta - log(1' exp(G theta)) and theta = L log(pi).
    """

    # Full-column-rank t x (t-1) design matrix.
    G = Instance(np.ndarray)

    # (t-1) x t matrix of row contrasts.
    L = Instance(np.ndarray)

    # Whether G is the identity with its first column removed, for which
    # the expected information has an explicit inverse.
    is_default = Bool(False)


def build_schema(dims, names=None):
    """ Create a table schema from the category counts of the variables.
    """
    dims = [int(c) for c in dims]
    schema = TableSchema(dims=dims)
    if names is not None:
        names = [str(name) for name in names]
        if len(names) != len(dims) or len(set(names)) != len(names):
            raise SchemaError("Need %d distinct variable names, got %r"
                              % (len(dims), names))
        schema.names = names
    return schema


def default_basis(schema):
    """ Canonical basis with G the identity minus its first column and
    L the contrasts of each cell against the first cell.
    """
    t = schema.t
    G = np.eye(t)[:, 1:]
    L = np.hstack((-np.ones((t-1, 1)), np.eye(t-1)))
    G.setflags(write=False)
    L.setflags(write=False)
    return CanonicalBasis(G=G, L=L, is_default=True)


def theta_to_pi(theta, basis):
    """ Cell probabilities from canonical parameters.

    The normalizing constant is computed with log-sum-exp, so that large
    excursions of theta (e.g., during step halving) do not overflow.
    """
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ConditioningError("Canonical parameters must be finite")
    log_pi = basis.G.dot(theta)
    log_pi -= logsumexp(log_pi)
    return np.exp(log_pi)


def pi_to_theta(pi, basis):
    """ Canonical parameters from strictly positive cell probabilities.
    """
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0):
        raise ConditioningError(
            "Cannot take canonical parameters of a probability vector with "
            "zero entries; the estimate lies on the boundary")
    return basis.L.dot(np.log(pi))
