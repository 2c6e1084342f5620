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

""" Command-line interface to marginfit.
"""
from __future__ import absolute_import

import click
from traitlets import TraitError

from .core.errors import MarginfitError
from .fit.covariates import CovariateFitter
from .fit.penalty import PenalizedFitter, PenaltyOptions, penalty_path
from .fit.solver import FitOptions, Fitter, fit_multistart
from .io.data import read_counts, read_stratified
from .io.model_file import load_model_file
from .io.report import build_report, report_json, report_text


@click.command()
@click.argument('model_file', type=click.Path(exists=True, dir_okay=False))
@click.argument('data', type=click.Path(exists=True, dir_okay=False))
@click.option('-o', '--out', type=click.File('w'),
              help="Write the JSON report to this file.")
@click.option('--algorithm', type=click.Choice(['lagrangian', 'regression']),
              help="Update rule of the constrained fit.")
@click.option('--max-iter', type=click.IntRange(min=1),
              help="Maximum number of iterations.")
@click.option('--tol', type=float,
              help="Tolerance on the constraint residual and the score.")
@click.option('--multi-start', type=click.IntRange(min=0),
              help="Number of additional random starting points.")
@click.option('--seed', type=int, envvar='MARGINFIT_SEED',
              help="Seed for random starting points.")
@click.option('--path', 'run_path', is_flag=True,
              help="Fit along the penalty grid of the model file.")
@click.option('--trace', is_flag=True,
              help="Print every iteration to standard error.")
@click.pass_context
def cli(ctx, model_file, data, out, algorithm, max_iter, tol, multi_start,
        seed, run_path, trace):
    """ Fit the marginal model in MODEL_FILE to the counts in DATA.

    Exits with status 0 when the fit converges, 2 when it does not and 1 on
    invalid input.
    """
    try:
        spec = load_model_file(model_file)
        options = FitOptions.from_library_config(**spec.fit_options)
        if algorithm is not None:
            options.algorithm = algorithm
        if max_iter is not None:
            options.max_iter = max_iter
        if tol is not None:
            options.tol_constraint = options.tol_score = tol
        penalty_options = PenaltyOptions.from_library_config(
            **spec.penalty_options)
        if seed is None:
            seed = spec.options.get('seed')
        if multi_start is None:
            multi_start = spec.options.get('multi_start', 0)
        if run_path and spec.penalty is None:
            raise click.ClickException("--path needs a penalty block in the "
                                       "model file")

        model, constraint = spec.model, spec.constraint
        path = multistart = None
        if spec.has_covariates:
            fitter = CovariateFitter(options=options)
            watch(fitter, trace)
            stratified = read_stratified(data, model, spec.formula,
                                         spec.design_path)
            result = fitter.fit(stratified, model)
        elif spec.penalty is not None:
            fitter = PenalizedFitter(options=options,
                                     penalty_options=penalty_options)
            watch(fitter, trace)
            y = read_counts(data, spec.schema)
            if run_path:
                path = penalty_path(y, model, spec.penalty,
                                    constraint=constraint, fitter=fitter)
                result = path.points[-1].result
            else:
                result = fitter.fit(y, model, spec.penalty, constraint)
        else:
            y = read_counts(data, spec.schema)
            if multi_start:
                multistart = fit_multistart(y, model, constraint, options,
                                            n_starts=multi_start, seed=seed,
                                            observer=echo_event if trace
                                            else None)
                result = multistart.best or multistart.results[0]
            else:
                fitter = Fitter(options=options)
                watch(fitter, trace)
                result = fitter.fit(y, model, constraint)
    except (MarginfitError, TraitError, ValueError, IOError) as error:
        raise click.ClickException(str(error))

    report = build_report(result, model, path=path, multistart=multistart)
    if out is not None:
        out.write(report_json(report))
    click.echo(report_text(report), nl=False)
    if path is not None:
        converged = all(point.converged for point in path.points)
    else:
        converged = result.converged
    ctx.exit(0 if converged else 2)


def echo_event(change):
    """ Echo an iteration event to standard error.
    """
    event = change['new']
    click.echo("iteration %d: loglik %.10g, constraint %.3g, score %.3g, "
               "step %g" % (event.iteration, event.loglik,
                            event.constraint_norm, event.score_norm,
                            event.step_scale), err=True)


def watch(fitter, trace):
    """ Echo the iteration events of a fitter to standard error.
    """
    if trace:
        fitter.observe(echo_event, 'event')
