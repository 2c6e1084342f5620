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

""" Marginal log-linear parameterizations.

A parameterization is given by an ordered list of margins (subsets of the
variables) and an assignment of every interaction term (effect) to the margin
within which it is defined. It determines a zero-one marginalization matrix M
and a matrix of row contrasts C such that the marginal log-linear parameters
are eta = C log(M pi).

Within a margin, the parameters of an effect E are log-linear contrasts of
the marginal table. With baseline coding the contrast vector for levels
(a_v : v in E) is the Kronecker product over the margin's variables of
e_{a_v} - e_1 (for v in E) and e_1 (for v not in E); with effect coding the
factors are e_{a_v} - 1/c_v and 1/c_v respectively. Only non-baseline levels
a_v = 2, ..., c_v are used, giving prod(c_v - 1) parameters per effect and
t - 1 parameters in total when the parameterization is complete.
"""
from __future__ import absolute_import

from functools import reduce
import itertools

import networkx as nx
import numpy as np
from traitlets import HasTraits, Bool, Enum, Instance, Int, List, Tuple, \
    Unicode

from .errors import ConditioningError, SingularModelError, SpecError

# Smallest marginal probability for which diag(M pi) is inverted.
MARGIN_FLOOR = 1e-12

# Largest condition number accepted when inverting a Jacobian.
MAX_CONDITION = 1e12


class MllpSpec(HasTraits):
    """ Specification of a marginal log-linear parameterization.

    Variables are referred to by their zero-based positions in the schema.
    """

    # Ordered margins, each a sorted tuple of variable positions.
    margins = List(Tuple())

    # Pairs (effect, margin position). An effect may appear more than once,
    # which makes the parameterization incomplete.
    assignments = List(Tuple())

    # Contrast coding within margins.
    coding = Enum(['baseline', 'effect'], default_value='baseline')

    @classmethod
    def from_margins(cls, margins, effects=None, coding='baseline'):
        """ Create a specification from an ordered list of margins.

        If `effects` is omitted, each effect is assigned to the first margin
        containing it, the standard hierarchical completion. Otherwise
        `effects` is a mapping (or a sequence of pairs) from effects to
        margin positions.
        """
        margins = [tuple(sorted(set(margin))) for margin in margins]
        if effects is None:
            assignments = []
            for effect in all_effects(sorted(set().union(*margins))):
                for j, margin in enumerate(margins):
                    if set(effect).issubset(margin):
                        assignments.append((effect, j))
                        break
        else:
            pairs = effects.items() if isinstance(effects, dict) else effects
            assignments = [(tuple(sorted(effect)), int(j))
                           for effect, j in pairs]
        return cls(margins=margins, assignments=assignments, coding=coding)

    def effects_of(self, j):
        """ Effects assigned to the j-th margin, in canonical order.
        """
        effects = {effect for effect, k in self.assignments if k == j}
        return sorted(effects, key=lambda e: (len(e), e))


class Violation(HasTraits):
    """ A single defect found when validating a specification.
    """

    # One of 'unknown', 'not_subset', 'missing', 'duplicate', 'ordering',
    # 'hierarchy'.
    kind = Unicode()

    # The effect concerned, if any.
    effect = Tuple()

    # The margin position concerned, if any.
    margin = Int(-1)

    message = Unicode()

    def __repr__(self):
        return 'Violation(%r)' % self.message


class ValidityReport(HasTraits):
    """ Outcome of `validate_spec`.
    """

    # Every effect defined in precisely one margin.
    complete = Bool()

    # Margins in non-decreasing order and no effect deferred to a later
    # margin than one containing it.
    hierarchical = Bool()

    violations = List(Instance(Violation))


class MllpMatrices(HasTraits):
    """ The matrices C and M of a parameterization eta = C log(M pi).
    """

    # (t-1) x u matrix of row contrasts.
    C = Instance(np.ndarray)

    # u x t zero-one marginalization matrix.
    M = Instance(np.ndarray)

    # Name of each coordinate of eta, e.g. 'A:B[2,3]'.
    labels = List(Unicode())

    # Effect (tuple of variable positions) of each coordinate of eta.
    effects = List(Tuple())

    # Margin position of each coordinate of eta.
    margin_of = List(Int())

    @property
    def u(self):
        """ Total number of marginal cells.
        """
        return self.M.shape[0]

    def coordinates(self, effect):
        """ Positions of the eta coordinates belonging to an effect.
        """
        effect = tuple(sorted(effect))
        return [k for k, e in enumerate(self.effects) if e == effect]


def all_effects(variables):
    """ All nonempty subsets of the given variables, smallest first.
    """
    variables = list(variables)
    return [combo for size in range(1, len(variables)+1)
            for combo in itertools.combinations(variables, size)]


def effect_name(effect, schema):
    """ Name of an effect, its variable names joined by ':'.
    """
    return ':'.join(schema.names[v] for v in effect)


def validate_spec(spec, schema):
    """ Check completeness and hierarchy of a specification.

    Never raises: all defects are listed in the returned report.
    """
    violations = []
    d = schema.d

    def add(kind, message, effect=(), margin=-1):
        violations.append(Violation(kind=kind, message=message,
                                    effect=tuple(effect), margin=margin))

    def describe(effect):
        return '{%s}' % ','.join(
            schema.names[v] if 0 <= v < d else str(v) for v in effect)

    for j, margin in enumerate(spec.margins):
        if any(not 0 <= v < d for v in margin) or not margin:
            add('unknown', "Margin %s is not a nonempty set of table variables"
                % describe(margin), margin=j)

    # Completeness: every nonempty subset defined in precisely one margin.
    where = {}
    for effect, j in spec.assignments:
        if not 0 <= j < len(spec.margins):
            add('unknown', "Effect %s assigned to nonexistent margin %d"
                % (describe(effect), j), effect=effect, margin=j)
            continue
        if not set(effect).issubset(spec.margins[j]):
            add('not_subset', "Effect %s is not a subset of margin %s"
                % (describe(effect), describe(spec.margins[j])),
                effect=effect, margin=j)
        where.setdefault(tuple(effect), []).append(j)
    for effect in all_effects(range(d)):
        margins = where.pop(effect, [])
        if not margins:
            add('missing', "Effect %s is not defined in any margin"
                % describe(effect), effect=effect)
        elif len(margins) > 1:
            for j in margins:
                add('duplicate', "Effect %s is defined in more than one "
                    "margin (here margin %s)"
                    % (describe(effect), describe(spec.margins[j])),
                    effect=effect, margin=j)
    for effect in where:
        add('unknown', "Effect %s is not a set of table variables"
            % describe(effect), effect=effect)
    complete = not violations

    # Hierarchy: margin order must extend the inclusion order, and no effect
    # contained in a margin may be deferred to a later margin.
    nviolations = len(violations)
    inclusion = nx.DiGraph()
    inclusion.add_nodes_from(range(len(spec.margins)))
    for i, j in itertools.permutations(range(len(spec.margins)), 2):
        if set(spec.margins[i]) < set(spec.margins[j]):
            inclusion.add_edge(i, j)
    for i, j in inclusion.edges():
        if i > j:
            add('ordering', "Margin %s is listed after its superset %s"
                % (describe(spec.margins[i]), describe(spec.margins[j])),
                margin=i)
    for effect, k in spec.assignments:
        if not 0 <= k < len(spec.margins):
            continue
        for margin in spec.margins[:k]:
            if set(effect).issubset(margin):
                add('hierarchy', "Effect %s is contained in margin %s but "
                    "defined in the later margin %s"
                    % (describe(effect), describe(margin),
                       describe(spec.margins[k])), effect=effect, margin=k)
                break
    hierarchical = len(violations) == nviolations

    return ValidityReport(complete=complete, hierarchical=hierarchical,
                          violations=violations)


def marginal_matrix(schema, margins):
    """ Stacked zero-one matrix producing the given margins of the table.

    Rows for each margin are in lexicographic order of the marginal cells.
    """
    cells = schema.cells
    blocks = []
    for margin in margins:
        margin = list(margin)
        dims = [schema.dims[v] for v in margin]
        codes = np.ravel_multi_index(cells[:, margin].T, dims)
        size = int(np.prod(dims))
        blocks.append((codes[np.newaxis, :] ==
                       np.arange(size)[:, np.newaxis]).astype(float))
    return np.vstack(blocks)


def build_matrices(spec, schema):
    """ Build the matrices C and M of a complete specification.
    """
    report = validate_spec(spec, schema)
    if not report.complete:
        raise SpecError(
            "The parameterization is not complete: every interaction must be "
            "defined in precisely one margin (completeness is necessary for "
            "a smooth model). Problems: %s"
            % '; '.join(v.message for v in report.violations))

    t = schema.t
    M = marginal_matrix(schema, spec.margins)
    C = np.zeros((t-1, M.shape[0]))
    labels, effects, margin_of = [], [], []
    offset, row = 0, 0
    for j, margin in enumerate(spec.margins):
        size = int(np.prod([schema.dims[v] for v in margin]))
        for effect in spec.effects_of(j):
            levels = itertools.product(
                *[range(1, schema.dims[v]) for v in effect])
            for level in levels:
                at = dict(zip(effect, level))
                factors = [_contrast_factor(schema.dims[v], at.get(v),
                                            spec.coding)
                           for v in margin]
                C[row, offset:offset+size] = reduce(np.kron, factors)
                labels.append('%s[%s]' % (
                    effect_name(effect, schema),
                    ','.join(str(a+1) for a in level)))
                effects.append(effect)
                margin_of.append(j)
                row += 1
        offset += size
    assert row == t-1

    C.setflags(write=False)
    M.setflags(write=False)
    return MllpMatrices(C=C, M=M, labels=labels, effects=effects,
                        margin_of=margin_of)


def _contrast_factor(c, level, coding):
    """ Factor of the Kronecker product defining one contrast row.

    `level` is None for a margin variable outside the effect.
    """
    if coding == 'baseline':
        factor = np.zeros(c)
        if level is None:
            factor[0] = 1.0
        else:
            factor[level] = 1.0
            factor[0] = -1.0
    else:
        if level is None:
            factor = np.full(c, 1.0/c)
        else:
            factor = np.full(c, -1.0/c)
            factor[level] += 1.0
    return factor


def margins_of(matrices, pi):
    """ Stacked marginal probabilities M pi, checked against the floor.
    """
    m = matrices.M.dot(pi)
    if np.any(m < MARGIN_FLOOR):
        raise ConditioningError(
            "Marginal probability %.3g below the floor %g; the fit is "
            "approaching the boundary" % (m.min(), MARGIN_FLOOR))
    return m


def eta_of_pi(matrices, pi):
    """ Marginal log-linear parameters eta = C log(M pi).

    `pi` need not be normalized: eta is homogeneous of degree zero.
    """
    pi = np.asarray(pi, dtype=float)
    return matrices.C.dot(np.log(margins_of(matrices, pi)))


def eta_jacobian(matrices, basis, pi):
    """ Derivative of eta with respect to theta,
    C diag(M pi)^-1 M diag(pi) G.

    Uses diag(pi) in place of Omega, which is exact because eta is
    homogeneous in pi.
    """
    m = margins_of(matrices, pi)
    weighted = matrices.M * pi[np.newaxis, :] / m[:, np.newaxis]
    return matrices.C.dot(weighted).dot(basis.G)


def jacobian_R(matrices, basis, pi):
    """ The matrix R = d theta / d eta' = [C diag(M pi)^-1 M diag(pi) G]^-1.
    """
    return invert_jacobian(eta_jacobian(matrices, basis, pi))


def invert_jacobian(J):
    """ Invert a Jacobian, refusing singular or numerically singular ones.
    """
    if J.shape[0] != J.shape[1]:
        raise SingularModelError(
            "Jacobian of shape %r is not square; the parameterization is "
            "not complete" % (J.shape,))
    if J.shape[0] == 0:
        return J.copy()
    cond = np.linalg.cond(J)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularModelError(
            "Jacobian is singular (condition number %.3g): the point is not "
            "smooth or the parameterization is not complete" % cond)
    return np.linalg.inv(J)
