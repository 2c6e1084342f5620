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
from pathlib2 import Path
import unittest

from click.testing import CliRunner
import numpy as np
from numpy.testing import assert_allclose

from ..cli import cli
from .oracles import independence_mle

data_path = Path(__file__).parent.joinpath('data')


def data_file(name):
    return str(data_path.joinpath(name))


class TestCLI(unittest.TestCase):
    """ Test the command-line interface to marginfit.
    """

    def invoke(self, *args, **kwargs):
        runner = CliRunner(mix_stderr=False)
        with runner.isolated_filesystem():
            result = runner.invoke(cli, list(args) + ['--out', 'report.json'],
                                   **kwargs)
            report = None
            if Path('report.json').exists():
                with open('report.json') as f:
                    text = f.read()
                report = json.loads(text) if text else None
        return result, report

    def test_saturated(self):
        """ Does the saturated model reproduce the observed proportions?
        """
        result, report = self.invoke(data_file('saturated_2x2.json'),
                                     data_file('counts_2x2.csv'))
        self.assertEqual(result.exit_code, 0, result.output)
        y = np.array([30., 12., 17., 41.])
        assert_allclose(report['pi'], y / y.sum(), rtol=1e-10)
        self.assertIn('converged: yes', result.output)

    def test_independence(self):
        """ Does the independence model match its closed-form MLE?
        """
        for algorithm in ('lagrangian', 'regression'):
            result, report = self.invoke(data_file('independence_3x3.json'),
                                         data_file('counts_3x3.csv'),
                                         '--algorithm', algorithm)
            self.assertEqual(result.exit_code, 0, result.output)
            y = [20, 10, 5, 8, 25, 9, 4, 11, 30]
            assert_allclose(report['pi'], independence_mle(y, (3, 3)),
                            atol=1e-8)
            self.assertLessEqual(report['constraint_norm'], 1e-8)
            self.assertEqual(report['status']['algorithm'], algorithm)
            self.assertTrue(report['observed_info']['local_max'])

    def test_unknown_variable(self):
        """ Is a margin naming an unknown variable an input error?
        """
        result, report = self.invoke(data_file('bad_margin.json'),
                                     data_file('counts_3x3.csv'))
        self.assertEqual(result.exit_code, 1)
        self.assertIn("'Q'", result.stderr)
        self.assertIsNone(report)

    def test_incomplete(self):
        """ Is an incomplete margin sequence an input error?
        """
        result, _ = self.invoke(data_file('incomplete.json'),
                                data_file('counts_3x3.csv'))
        self.assertEqual(result.exit_code, 1)
        self.assertIn('complete', result.stderr)

    def test_not_converged(self):
        """ Does an exhausted iteration budget exit with status 2?
        """
        result, report = self.invoke(data_file('independence_3x3.json'),
                                     data_file('counts_3x3.csv'),
                                     '--max-iter', '1', '--tol', '1e-14')
        self.assertEqual(result.exit_code, 2)
        self.assertFalse(report['status']['converged'])
        self.assertEqual(report['status']['iterations'], 1)

    def test_boundary(self):
        """ Does a boundary estimate exit with status 2?
        """
        result, report = self.invoke(data_file('saturated_2x2.json'),
                                     data_file('empty_cell_2x2.csv'))
        self.assertEqual(result.exit_code, 2, result.output)
        self.assertFalse(report['status']['converged'])
        self.assertTrue(report['status']['boundary'])

    def test_path_exit_status(self):
        """ Does a path with a non-converged point exit with status 2 even
        when its last point converges?
        """
        result, report = self.invoke(data_file('shrink_2x2.json'),
                                     data_file('counts_2x2.csv'), '--path',
                                     '--max-iter', '1')
        self.assertEqual(result.exit_code, 2, result.output)
        self.assertEqual([p['converged'] for p in report['path']],
                         [False, True])

    def test_multi_start_trace(self):
        """ Are the iterations of every start printed on request?
        """
        result, report = self.invoke(data_file('independence_3x3.json'),
                                     data_file('counts_3x3.csv'),
                                     '--multi-start', '2', '--seed', '3',
                                     '--trace')
        self.assertEqual(result.exit_code, 0, result.output)
        lines = result.stderr.strip().splitlines()
        self.assertEqual(sum(line.startswith('iteration 1:')
                             for line in lines), 3)

    def test_trace(self):
        """ Are iterations printed to standard error on request?
        """
        result, report = self.invoke(data_file('independence_3x3.json'),
                                     data_file('counts_3x3.csv'), '--trace')
        self.assertEqual(result.exit_code, 0)
        lines = result.stderr.strip().splitlines()
        self.assertEqual(len(lines), report['status']['iterations'])
        self.assertTrue(lines[0].startswith('iteration 1:'))

    def test_multi_start(self):
        """ Are random starts reported and reproducible from the seed?
        """
        args = (data_file('independence_3x3.json'),
                data_file('counts_3x3.csv'), '--multi-start', '3')
        env = {'MARGINFIT_SEED': '7'}
        result, report = self.invoke(*args, env=env)
        self.assertEqual(result.exit_code, 0, result.output)
        logliks = report['multi_start']['logliks']
        self.assertEqual(len(logliks), 4)
        assert_allclose(logliks, logliks[0], rtol=1e-9)
        _, again = self.invoke(*args, env=env)
        self.assertEqual(report, again)

    def test_penalty_path(self):
        """ Does the penalty path report every grid point?
        """
        result, report = self.invoke(data_file('penalty_2x2.json'),
                                     data_file('independent_2x2.csv'),
                                     '--path')
        self.assertEqual(result.exit_code, 0, result.output)
        assert_allclose([p['nu'] for p in report['path']],
                        np.geomspace(0.1, 100.0, 5))
        self.assertIn('A:B[2,2]', report['penalty']['zero_labels'])
        self.assertNotIn('A[2]', report['penalty']['zero_labels'])

    def test_path_needs_penalty(self):
        """ Is --path refused without a penalty block?
        """
        result, _ = self.invoke(data_file('saturated_2x2.json'),
                                data_file('counts_2x2.csv'), '--path')
        self.assertEqual(result.exit_code, 1)

    def test_covariates(self):
        """ Can a covariate model be fitted from stratified data?
        """
        result, report = self.invoke(data_file('covariates_2x2.json'),
                                     data_file('strata_2x2.csv'))
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertEqual(list(report['eta']), ['s1', 's2'])
        self.assertEqual(len(report['beta']), 4)
        self.assertIn('A:B[2,2]:x', report['beta'])
        for unit in ('s1', 's2'):
            self.assertAlmostEqual(sum(report['pi'][unit]), 1.0)

    def test_deterministic(self):
        """ Do repeated runs write identical reports?
        """
        args = (data_file('independence_3x3.json'),
                data_file('counts_3x3.csv'))
        first, report = self.invoke(*args)
        second, again = self.invoke(*args)
        self.assertEqual(first.output, second.output)
        self.assertEqual(report, again)


if __name__ == '__main__':
    unittest.main()
