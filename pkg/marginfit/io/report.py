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

""" Fit reports, as JSON and as plain text.

Both renderings are produced from one report document whose numbers are
formatted once, with 17 significant digits, so they agree exactly.
"""
from __future__ import absolute_import

from collections import OrderedDict
import json
import re

import numpy as np

# Placeholder wrapping preformatted numbers inside the JSON encoder output.
_NUMBER = re.compile(r'"@@num:([^"@]*)@@"')


class Number(object):
    """ A float formatted with 17 significant digits. Non-finite values
    have no JSON literal and render as `null` in both formats.
    """

    def __init__(self, value):
        self.value = float(value)
        self.text = '%.17g' % self.value if np.isfinite(self.value) \
            else 'null'

    @property
    def json(self):
        return self.text

    def __repr__(self):
        return self.text


def plain(value):
    """ Convert numpy values to report values, wrapping floats in `Number`.
    """
    if isinstance(value, dict):
        return OrderedDict((str(k), plain(v)) for k, v in value.items())
    if isinstance(value, (list, tuple, np.ndarray)):
        return [plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return Number(value)
    return value


def build_report(result, model, path=None, multistart=None):
    """ Assemble the report of a fit.

    Parameters
    ----------
    result : FitResult
        A constrained, covariate or penalized fit

    model : MarginalModel
        The parameterization, for coordinate labels

    path : PenaltyPath (optional)
        Penalty path, whose last point is `result`

    multistart : MultiStartResult (optional)
        All fits of a multi-start run, `result` being the best
    """
    report = OrderedDict()
    report['status'] = OrderedDict([
        ('converged', result.converged),
        ('boundary', result.boundary),
        ('message', result.message),
        ('algorithm', result.algorithm),
        ('iterations', result.iterations),
    ])
    report['loglik'] = result.loglik
    report['constraint_norm'] = result.constraint_norm
    report['score_norm'] = result.score_norm

    unit_ids = getattr(result, 'unit_ids', None)
    if unit_ids:
        report['eta'] = OrderedDict(
            (str(unit), OrderedDict(zip(model.labels, eta)))
            for unit, eta in zip(unit_ids, result.eta_hat))
        report['pi'] = OrderedDict(
            (str(unit), pi) for unit, pi in zip(unit_ids, result.pi_hat))
    else:
        report['eta'] = OrderedDict(zip(model.labels, result.eta_hat))
        report['pi'] = result.pi_hat
    if result.beta_hat is not None:
        errors = result.std_errors
        report['beta'] = OrderedDict(
            (label, OrderedDict([
                ('estimate', estimate),
                ('std_error', None if errors is None else errors[k]),
            ]))
            for k, (label, estimate) in enumerate(zip(result.beta_labels,
                                                      result.beta_hat)))
    if result.lambda_hat is not None:
        report['lambda'] = result.lambda_hat
    report['observed_info'] = OrderedDict([
        ('eigenvalues', result.info_eigenvalues),
        ('local_max', result.local_max),
    ])
    if hasattr(result, 'sparsity'):
        report['penalty'] = OrderedDict([
            ('nu', result.nu),
            ('objective', result.objective),
            ('zero_labels', result.zero_labels),
            ('sweeps', result.sweeps),
            ('sweep_limit_hit', result.sweep_limit_hit),
        ])
    if path is not None:
        report['path'] = [OrderedDict([
            ('nu', point.nu),
            ('loglik', point.loglik),
            ('objective', point.objective),
            ('zeros', sum(point.sparsity)),
            ('zero_labels', point.zero_labels),
            ('converged', point.converged),
        ]) for point in path.points]
        report['path_loglik_nonincreasing'] = path.loglik_nonincreasing
    if multistart is not None:
        report['multi_start'] = OrderedDict([
            ('logliks', [r.loglik for r in multistart.results]),
            ('converged', [r.converged for r in multistart.results]),
        ])
    report['trace'] = [event.as_dict() for event in result.trace]
    return plain(report)


def report_json(report):
    """ JSON rendering of a report.
    """
    def default(value):
        if isinstance(value, Number):
            return '@@num:%s@@' % value.json
        raise TypeError("Cannot serialize %r" % value)
    text = json.dumps(report, indent=2, default=default)
    return _NUMBER.sub(lambda match: match.group(1), text) + '\n'


def report_text(report):
    """ Plain-text rendering of a report.
    """
    lines = []
    _render(report, lines, 0)
    return '\n'.join(lines) + '\n'


def _render(value, lines, depth):
    indent = '  ' * depth
    for key, item in value.items():
        if isinstance(item, dict):
            if item and all(not isinstance(v, (dict, list))
                            for v in item.values()):
                lines.append('%s%s:' % (indent, key))
                width = max(len(k) for k in item)
                for k, v in item.items():
                    lines.append('%s  %s  %s' % (indent, k.ljust(width),
                                                 _scalar(v)))
            else:
                lines.append('%s%s:' % (indent, key))
                _render(item, lines, depth+1)
        elif isinstance(item, list) and item and isinstance(item[0], dict):
            lines.append('%s%s:' % (indent, key))
            for k, entry in enumerate(item):
                lines.append('%s  [%d]' % (indent, k+1))
                _render(entry, lines, depth+2)
        elif isinstance(item, list):
            lines.append('%s%s: %s' % (indent, key, ' '.join(
                _scalar(v) for v in item)))
        else:
            lines.append('%s%s: %s' % (indent, key, _scalar(item)))


def _scalar(value):
    if value is None:
        return '-'
    if isinstance(value, bool):
        return 'yes' if value else 'no'
    return str(value)
