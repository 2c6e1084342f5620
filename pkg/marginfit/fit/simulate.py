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

""" Synthetic father/son social mobility data.

A 3 x 3 table of father's and son's social class, parameterized by the
multivariate logistic model with margins {F}, {S}, {F, S}. The father's
marginal logits depend on the son's age; the son's marginal logits and
the local log odds ratios depend on the son's age and ten further
individual characteristics. With intercepts this gives 76 parameters.
"""
from __future__ import absolute_import

import numpy as np

from ..core.mllp import MllpSpec
from ..core.model import MarginalModel
from ..core.table import build_schema
from .covariates import StratifiedData, design_from_covariates

COVARIATE_NAMES = ['age', 'female', 'urban', 'siblings', 'firstborn',
                   'reading', 'maths', 'school_leaving', 'private_school',
                   'region_south', 'region_north']

# Covariates drawn as Bernoulli(0.5); the rest are standard normal.
BINARY_COVARIATES = {'female', 'urban', 'firstborn', 'private_school',
                     'region_south', 'region_north'}


def mobility_model():
    """ Multivariate logistic parameterization of the 3 x 3 table.
    """
    schema = build_schema([3, 3], names=['F', 'S'])
    spec = MllpSpec.from_margins([(0,), (1,), (0, 1)])
    return MarginalModel.from_spec(schema, spec)


def mobility_formula():
    """ Covariates entering each effect of the mobility model.
    """
    return {
        'F': ['age'],
        'S': list(COVARIATE_NAMES),
        'F:S': list(COVARIATE_NAMES),
    }


def simulate_covariates(n, rng):
    columns = []
    for name in COVARIATE_NAMES:
        if name in BINARY_COVARIATES:
            columns.append(rng.binomial(1, 0.5, size=n).astype(float))
        else:
            columns.append(rng.normal(size=n))
    return np.column_stack(columns)


def true_coefficients(labels, rng):
    """ Generating coefficients: fixed intercepts and small random slopes.
    """
    intercepts = {
        'F[2]': 0.2, 'F[3]': -0.3, 'S[2]': 0.1, 'S[3]': -0.2,
        'F:S[2,2]': 0.6, 'F:S[2,3]': 0.3, 'F:S[3,2]': 0.3, 'F:S[3,3]': 0.8,
    }
    beta = np.empty(len(labels))
    for k, label in enumerate(labels):
        coordinate, covariate = label.rsplit(':', 1)
        if covariate == '(Intercept)':
            beta[k] = intercepts[coordinate]
        else:
            beta[k] = rng.normal(scale=0.15)
    return beta


def simulate_mobility(n=2000, seed=0):
    """ Simulate n individuals from the mobility model.

    Returns
    -------
    (data, model, beta) where `data` holds one-hot responses and the
    individual designs, and `beta` the generating coefficients.
    """
    rng = np.random.RandomState(seed)
    model = mobility_model()
    covariates = simulate_covariates(n, rng)
    X, labels = design_from_covariates(model, covariates, COVARIATE_NAMES,
                                       mobility_formula())
    beta = true_coefficients(labels, rng)
    y = np.zeros((n, model.t))
    theta = None
    for i in range(n):
        theta = model.theta_of_eta(X[i].dot(beta), theta)
        pi = model.pi(theta)
        y[i, rng.choice(model.t, p=pi / pi.sum())] = 1.0
    data = StratifiedData.from_units(zip(y, X), beta_labels=labels)
    return data, model, beta
