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

from __future__ import absolute_import

import unittest

import numpy as np
from numpy.testing import assert_allclose

from ...core.errors import SpecError
from ...core.mllp import MllpSpec
from ...core.model import MarginalModel
from ...core.table import build_schema
from ...tests.oracles import independence_mle, lattice_argmax, random_pd
from ..constraint import ModelConstraint
from ..penalty import PenalizedFitter, PenaltyOptions, PenaltySpec, \
    Quadratic, coordinate_ascent, penalized_fit, penalty_path, \
    quadratic_from_state, soft_threshold, subgradient_gap
from ..solver import FitOptions, evaluate_state, fit, regression_update


def logistic_model(dims):
    names = ['A', 'B', 'C'][:len(dims)]
    schema = build_schema(dims, names=names)
    margins = [(j,) for j in range(len(dims))] + [tuple(range(len(dims)))]
    return MarginalModel.from_spec(schema, MllpSpec.from_margins(margins))


class TestSoftThreshold(unittest.TestCase):

    def test_values(self):
        """ Does soft-thresholding shrink towards zero by nu?
        """
        self.assertEqual(soft_threshold(3.0, 1.0), 2.0)
        self.assertEqual(soft_threshold(-0.5, 1.0), 0.0)
        self.assertEqual(soft_threshold(-2.5, 1.0), -1.5)
        self.assertEqual(soft_threshold(1.0, 1.0), 0.0)
        self.assertEqual(soft_threshold(5.0, np.inf), 0.0)

    def test_odd_nonexpansive(self):
        """ Is soft-thresholding odd and non-expansive?
        """
        rng = np.random.RandomState(10)
        a, b = rng.normal(size=100), rng.normal(size=100)
        nu = 0.7
        assert_allclose(soft_threshold(-a, nu), -soft_threshold(a, nu))
        self.assertTrue(np.all(
            np.abs(soft_threshold(a, nu) - soft_threshold(b, nu)) <=
            np.abs(a - b) + 1e-15))


class TestCoordinateAscent(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.RandomState(11)

    def random_quadratic(self, k=3):
        return Quadratic(A=random_pd(k, self.rng),
                         b=self.rng.normal(scale=3.0, size=k))

    def test_unpenalized(self):
        """ Without a penalty, is the maximizer the regression proposal?
        """
        model = logistic_model([2, 3])
        y = np.array([12.0, 7.0, 3.0, 9.0, 15.0, 4.0])
        constraint = ModelConstraint.unconstrained(model)
        theta = self.rng.normal(scale=0.3, size=5)
        state = evaluate_state(theta, y, model, constraint)
        quad = quadratic_from_state(state.R, state.parts.info,
                                    state.parts.score, state.eta)
        ascent = coordinate_ascent(quad, 0.0, start=state.eta, tol=1e-14)
        self.assertTrue(ascent.converged)
        proposal = regression_update(state, np.eye(5))
        assert_allclose(ascent.beta, proposal.beta, atol=1e-10)

    def test_full_shrinkage(self):
        """ Does a large penalty give exactly zero?
        """
        quad = self.random_quadratic(4)
        ascent = coordinate_ascent(quad, 1e6)
        self.assertTrue(np.all(ascent.beta == 0))

    def test_subgradient(self):
        """ Do inner solutions satisfy the subgradient conditions?
        """
        for _ in range(10):
            quad = self.random_quadratic(5)
            nu = self.rng.uniform(0, 3, size=5)
            ascent = coordinate_ascent(quad, nu)
            self.assertTrue(ascent.converged)
            gap = subgradient_gap(quad.gradient(ascent.beta), ascent.beta,
                                  nu)
            self.assertLessEqual(gap, 1e-6)

    def test_lattice(self):
        """ Does coordinate ascent agree with a brute-force lattice search?
        """
        for _ in range(3):
            quad = self.random_quadratic(3)
            nu = np.full(3, 0.5)
            ascent = coordinate_ascent(quad, nu)
            def objective(points):
                return (-0.5 * np.einsum('ni,ij,nj->n', points, quad.A,
                                         points) +
                        points.dot(quad.b) - np.abs(points).dot(nu))
            coarse = lattice_argmax(objective, np.zeros(3), 2.0, 0.05)
            fine = lattice_argmax(objective, coarse, 0.05, 1e-3)
            assert_allclose(ascent.beta, fine, atol=2e-3)


class TestPenaltySpec(unittest.TestCase):

    def setUp(self):
        self.labels = ['A[2]', 'B[2]', 'A:B[2,2]']

    def test_resolve(self):
        """ Are penalties resolved by effect and by coordinate?
        """
        spec = PenaltySpec(nu=2.0, penalize=['A:B'])
        assert_allclose(spec.resolve(self.labels), [0, 0, 2])
        spec = PenaltySpec(nu=2.0, overrides={'A': 1.0, 'B[2]': 0.5})
        assert_allclose(spec.resolve(self.labels), [1, 0.5, 2])
        assert_allclose(spec.resolve(self.labels, nu=3.0), [1, 0.5, 3])
        spec = PenaltySpec(nu=2.0, weights=np.array([1.0, 2.0, np.inf]))
        assert_allclose(spec.resolve(self.labels), [2, 4, np.inf])

    def test_invalid(self):
        """ Are unknown names, negative penalties and unsorted grids
        refused?
        """
        with self.assertRaises(SpecError):
            PenaltySpec(penalize=['C']).resolve(self.labels)
        with self.assertRaises(SpecError):
            PenaltySpec(nu=-1.0).resolve(self.labels)
        with self.assertRaises(SpecError):
            PenaltySpec(grid=[1.0, 0.5])
        with self.assertRaises(SpecError):
            PenaltySpec(overrides={'A': -1.0})


class TestPenalizedFit(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.RandomState(12)
        self.model = logistic_model([2, 2])
        self.y = self.rng.multinomial(
            1000, np.outer([0.3, 0.7], [0.4, 0.6]).ravel()).astype(float)

    def test_unpenalized(self):
        """ Without a penalty, is the fit the maximum likelihood fit?
        """
        result = penalized_fit(self.y, self.model, PenaltySpec(nu=0.0))
        self.assertTrue(result.converged)
        mle = fit(self.y, self.model)
        assert_allclose(result.eta_hat, mle.eta_hat, atol=1e-8)
        assert_allclose(result.pi_hat, self.y / self.y.sum(), atol=1e-8)
        self.assertEqual(result.zero_labels, [])

    def test_interaction_zero(self):
        """ Does penalizing the interaction of independent data select
        independence exactly?
        """
        penalty = PenaltySpec(nu=50.0, penalize=['A:B'])
        result = penalized_fit(self.y, self.model, penalty)
        self.assertTrue(result.converged)
        self.assertEqual(result.eta_hat[2], 0.0)
        self.assertNotEqual(result.eta_hat[0], 0.0)
        self.assertNotEqual(result.eta_hat[1], 0.0)
        self.assertEqual(result.sparsity, [False, False, True])
        self.assertEqual(result.zero_labels, ['A:B[2,2]'])
        assert_allclose(result.pi_hat, independence_mle(self.y, [2, 2]),
                        atol=1e-8)
        self.assertLessEqual(result.score_norm, 1e-6)

    def test_objective_trace(self):
        """ Does the penalized objective not decrease along the trace?
        """
        fitter = PenalizedFitter(options=FitOptions.from_library_config())
        result = fitter.fit(self.y, self.model, PenaltySpec(nu=5.0))
        values = [event.loglik for event in result.trace]
        for a, b in zip(values, values[1:]):
            self.assertGreaterEqual(b, a - 1e-12 * (1 + abs(a)))

    def test_adaptive(self):
        """ Are adaptive weights the inverse pilot estimates?
        """
        mle = fit(self.y, self.model)
        result = penalized_fit(self.y, self.model,
                               PenaltySpec(nu=1.0, adaptive=True))
        assert_allclose(result.nu, 1.0 / np.abs(mle.eta_hat), rtol=1e-6)

    def test_constrained(self):
        """ With constraints, does the penalty fall on the free
        coordinates?
        """
        constraint = ModelConstraint.zeroed(self.model, ['A:B'])
        result = penalized_fit(self.y, self.model, PenaltySpec(nu=1e6),
                               constraint=constraint)
        self.assertTrue(result.converged)
        assert_allclose(result.eta_hat, 0.0)
        assert_allclose(result.pi_hat, 0.25, atol=1e-9)
        self.assertEqual(result.zero_labels, ['A[2]', 'B[2]'])

    def test_moderate_penalties(self):
        """ Does a cold start converge to a stationary point at moderate
        penalties?
        """
        model = logistic_model([2, 2, 2])
        y = np.array([32.0, 91.0, 45.0, 59.0, 75.0, 82.0, 86.0, 30.0])
        for nu in (4.6, 10.0, 21.5):
            result = penalized_fit(y, model, PenaltySpec(nu=nu))
            self.assertTrue(result.converged, result.message)
            self.assertLessEqual(result.score_norm, 1e-6)
            values = [event.loglik for event in result.trace]
            for a, b in zip(values, values[1:]):
                self.assertGreaterEqual(b, a - 1e-12 * (1 + abs(a)))

    def test_constrained_moderate(self):
        """ With the interaction zeroed, does a moderate penalty converge
        and satisfy the optimality conditions?
        """
        constraint = ModelConstraint.zeroed(self.model, ['A:B'])
        result = penalized_fit(self.y, self.model, PenaltySpec(nu=50.0),
                               constraint=constraint)
        self.assertTrue(result.converged, result.message)
        self.assertEqual(result.eta_hat[2], 0.0)
        self.assertLessEqual(result.score_norm, 1e-6)
        self.assertLessEqual(result.constraint_norm, 1e-8)

    def test_sweep_limit(self):
        """ Is the sweep cap reported rather than raised?
        """
        fitter = PenalizedFitter(
            options=FitOptions.from_library_config(max_iter=2),
            penalty_options=PenaltyOptions(max_sweeps=1, sweep_tol=0.0))
        result = fitter.fit(self.y, self.model, PenaltySpec(nu=5.0))
        self.assertTrue(result.sweep_limit_hit)


class TestPenaltyPath(unittest.TestCase):

    def test_endpoints(self):
        """ Does the path run from the maximum likelihood fit to zero?
        """
        model = logistic_model([2, 2])
        y = np.array([30.0, 12.0, 17.0, 41.0])
        path = penalty_path(y, model, PenaltySpec(), grid=[0.0, 1e6])
        self.assertEqual(len(path.points), 2)
        assert_allclose(path.points[0].eta, fit(y, model).eta_hat,
                        atol=1e-8)
        self.assertTrue(np.all(path.points[1].eta == 0))
        self.assertEqual(sum(path.points[1].sparsity), 3)

    def test_single_point(self):
        """ Is a one-point grid a single fit?
        """
        model = logistic_model([2, 2])
        y = np.array([30.0, 12.0, 17.0, 41.0])
        path = penalty_path(y, model, PenaltySpec(grid=[0.0]))
        self.assertEqual(len(path.points), 1)
        self.assertTrue(path.points[0].converged)

    def test_loglik_nonincreasing(self):
        """ Does the log-likelihood not increase along the path?
        """
        rng = np.random.RandomState(13)
        model = logistic_model([2, 2, 2])
        y = rng.multinomial(500, rng.dirichlet(np.full(8, 5.0))).astype(
            float)
        path = penalty_path(y, model, PenaltySpec(),
                            grid=list(np.geomspace(0.1, 100.0, 10)))
        self.assertEqual(len(path.points), 10)
        self.assertTrue(all(point.converged for point in path.points))
        self.assertTrue(path.loglik_nonincreasing)

    def test_empty_grid(self):
        """ Is an empty grid refused?
        """
        with self.assertRaises(SpecError):
            penalty_path(np.ones(4), logistic_model([2, 2]), PenaltySpec(),
                         grid=[])


if __name__ == '__main__':
    unittest.main()
