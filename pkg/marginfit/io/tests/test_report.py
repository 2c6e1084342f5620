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

import json
import unittest

import numpy as np

from ...core.mllp import MllpSpec
from ...core.model import MarginalModel
from ...core.table import build_schema
from ...fit.penalty import PenaltySpec, penalty_path
from ...fit.solver import fit
from ..report import Number, build_report, report_json, report_text


def numbers(value):
    if isinstance(value, Number):
        return [value]
    if isinstance(value, dict):
        value = list(value.values())
    if isinstance(value, list):
        return [n for item in value for n in numbers(item)]
    return []


def two_by_two():
    schema = build_schema([2, 2], names=['A', 'B'])
    return MarginalModel.from_spec(
        schema, MllpSpec.from_margins([(0,), (1,), (0, 1)]))


class TestReport(unittest.TestCase):

    def setUp(self):
        self.model = two_by_two()
        self.y = np.array([30., 12., 17., 41.])
        self.result = fit(self.y, self.model, algorithm='regression')

    def test_number(self):
        """ Are numbers formatted with 17 significant digits?
        """
        self.assertEqual(Number(0.1).text, '0.10000000000000001')
        self.assertEqual(Number(float('nan')).json, 'null')
        self.assertEqual(float(Number(1/3.).text), 1/3.)

    def test_non_finite(self):
        """ Do non-finite numbers render the same in text and JSON?
        """
        for value in (float('nan'), float('inf'), -float('inf')):
            number = Number(value)
            self.assertEqual(number.text, 'null')
            self.assertEqual(number.json, number.text)

    def test_json(self):
        """ Does the JSON report parse and carry the fitted values?
        """
        report = build_report(self.result, self.model)
        parsed = json.loads(report_json(report))
        self.assertTrue(parsed['status']['converged'])
        self.assertEqual(parsed['status']['algorithm'], 'regression')
        self.assertEqual(list(parsed['eta']), self.model.labels)
        np.testing.assert_allclose(parsed['pi'], self.y / self.y.sum(),
                                   rtol=1e-10)
        self.assertEqual(len(parsed['trace']), self.result.iterations)

    def test_same_numbers(self):
        """ Do the text and JSON renderings show identical numbers?
        """
        report = build_report(self.result, self.model)
        text, encoded = report_text(report), report_json(report)
        for value in report['pi']:
            self.assertIn(value.text, text)
            self.assertIn(value.text, encoded)
        self.assertIn('loglik: %s' % report['loglik'].text, text)
        self.assertIn('"loglik": %s' % report['loglik'].text, encoded)
        for value in numbers(report):
            self.assertIn(value.text, text)
            self.assertIn(value.text, encoded)

    def test_path(self):
        """ Does a penalty path report one entry per penalty level?
        """
        y = np.array([120., 180., 280., 420.])
        penalty = PenaltySpec(nu=1.0, penalize=['A:B'],
                              grid=[0.1, 10.0, 1000.0])
        path = penalty_path(y, self.model, penalty)
        report = build_report(path.points[-1].result, self.model, path=path)
        parsed = json.loads(report_json(report))
        self.assertEqual([p['nu'] for p in parsed['path']],
                         [0.1, 10.0, 1000.0])
        self.assertIn('penalty', parsed)
        self.assertIn('A:B[2,2]', parsed['penalty']['zero_labels'])
        self.assertIsInstance(parsed['path_loglik_nonincreasing'], bool)


if __name__ == '__main__':
    unittest.main()
