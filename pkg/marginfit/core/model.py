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

""" A marginal log-linear parameterization bound to a table schema.
"""
from __future__ import absolute_import

from operator import attrgetter

from cachetools import cachedmethod
from cachetools.keys import hashkey
import numpy as np
from traitlets import HasTraits, Dict, Instance

from .errors import ConditioningError, SpecError
from .mllp import MllpMatrices, MllpSpec, build_matrices, effect_name, \
    eta_of_pi, jacobian_R, validate_spec
from .table import CanonicalBasis, TableSchema, default_basis, theta_to_pi


class MarginalModel(HasTraits):
    """ Schema, parameterization and canonical basis used by the fitters.

    Construct with `MarginalModel.from_spec`, which refuses specifications
    that are incomplete or list a margin after its superset.
    """

    schema = Instance(TableSchema)
    spec = Instance(MllpSpec, allow_none=True)
    matrices = Instance(MllpMatrices)
    basis = Instance(CanonicalBasis)

    # Private traits.
    _kc_cache = Dict()

    @classmethod
    def from_spec(cls, schema, spec, basis=None):
        """ Validate a specification and build its matrices.

        The specification must be complete with its margins listed in
        non-decreasing inclusion order. Effects deferred to a later margin
        than one containing them are accepted.
        """
        report = validate_spec(spec, schema)
        ordering = [v for v in report.violations if v.kind == 'ordering']
        if not report.complete or ordering:
            what = 'complete' if not report.complete else 'hierarchical'
            raise SpecError(
                "Cannot fit a parameterization that is not %s "
                "(every interaction must be defined in precisely one margin, "
                "and margins must be listed in non-decreasing order): %s"
                % (what, '; '.join(v.message for v in report.violations)))
        return cls(schema=schema, spec=spec,
                   matrices=build_matrices(spec, schema),
                   basis=basis or default_basis(schema))

    @classmethod
    def saturated(cls, schema, coding='baseline'):
        """ Ordinary log-linear parameterization: one margin, the full table.
        """
        spec = MllpSpec.from_margins([range(schema.d)], coding=coding)
        return cls.from_spec(schema, spec)

    @property
    def t(self):
        return self.schema.t

    @property
    def labels(self):
        return self.matrices.labels

    def effect_coordinates(self, name):
        """ Positions of the eta coordinates of an effect given by name
        (e.g. 'A:B'), or of a single coordinate given by label.
        """
        if name in self.matrices.labels:
            return [self.matrices.labels.index(name)]
        coords = [k for k, effect in enumerate(self.matrices.effects)
                  if effect_name(effect, self.schema) == name]
        if not coords:
            raise SpecError("Unknown effect or coordinate %r" % name)
        return coords

    def pi(self, theta):
        return theta_to_pi(theta, self.basis)

    def eta(self, theta):
        return eta_of_pi(self.matrices, self.pi(theta))

    def R(self, pi):
        """ Jacobian d theta / d eta' at pi.
        """
        return jacobian_R(self.matrices, self.basis, pi)

    @cachedmethod(cache=attrgetter('_kc_cache'),
                  key=lambda self, K: hashkey(K.shape, K.tobytes()))
    def constraint_KC(self, K):
        """ The product K'C, which does not change across iterations.
        """
        KC = K.T.dot(self.matrices.C)
        KC.setflags(write=False)
        return KC

    def theta_of_eta(self, eta, theta0=None, tol=1e-10, max_iter=100):
        """ Canonical parameters with the given marginal log-linear
        parameters, by Newton iteration theta <- theta + R (eta - eta(theta)).
        """
        eta = np.asarray(eta, dtype=float)
        theta = np.zeros(self.t-1) if theta0 is None else \
            np.array(theta0, dtype=float)
        for _ in range(max_iter):
            pi = self.pi(theta)
            gap = eta - eta_of_pi(self.matrices, pi)
            if np.max(np.abs(gap), initial=0.0) <= tol:
                return theta
            step = self.R(pi).dot(gap)
            # Halve steps that would not reduce the gap.
            for _ in range(30):
                candidate = theta + step
                try:
                    new_gap = eta - self.eta(candidate)
                except ConditioningError:
                    step = step / 2
                    continue
                if np.max(np.abs(new_gap), initial=0.0) < \
                        np.max(np.abs(gap)):
                    break
                step = step / 2
            theta = candidate
        raise ConditioningError(
            "Marginal log-linear parameters could not be inverted; they may "
            "be incompatible")
