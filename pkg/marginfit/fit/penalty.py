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

""" L1-penalized marginal log-linear models.

The penalized log-likelihood phi(theta) = l(theta) - sum_j nu_j |eta_j| is
maximized by repeatedly replacing l with its quadratic approximation in
eta (the one behind the regression update, with X the identity) and
maximizing the penalized quadratic by coordinate-wise ascent. Every
coordinate update is a soft-thresholding, so estimates are exactly zero
where the penalty dominates.

With equality constraints eta = X beta the penalty falls on beta.
"""
from __future__ import absolute_import

import numpy as np
from scipy import linalg
from traitlets import Bool, Dict, Float, HasTraits, Instance, Int, List, \
    Unicode, validate
from traitlets.config import Configurable, LoggingConfigurable

from ..core.errors import ConditioningError, SingularModelError, SpecError
from ..core.likelihood import score_and_info
from ..core.mllp import eta_of_pi
from .constraint import ModelConstraint
from .fit_event import FitIteration
from .solver import BOUNDARY_FLOOR, FitOptions, FitResult, Fitter, \
    check_counts, library_config


class PenaltyOptions(Configurable):
    """ Stopping rules of the penalized fitter.
    """

    # Coordinate sweeps stop when no coordinate moves by more than
    # `sweep_tol`, or after `max_sweeps` sweeps.
    max_sweeps = Int(10000).tag(config=True)
    sweep_tol = Float(1e-10).tag(config=True)

    # The outer loop stops when successive estimates differ by less than
    # `outer_tol` in max-norm.
    outer_tol = Float(1e-8).tag(config=True)

    # When no step raises the objective, the fit still counts as converged
    # if the proposal meets the optimality conditions to within `gap_tol`.
    gap_tol = Float(1e-6).tag(config=True)

    @classmethod
    def from_library_config(cls, **kwargs):
        return cls(config=library_config(), **kwargs)


class PenaltySpec(HasTraits):
    """ Penalty weights nu, given globally and overridden by name.
    """

    # Global penalty applied to every penalized coordinate.
    nu = Float(0.0)

    # Effects or coordinate labels to penalize. Empty means all.
    penalize = List(Unicode())

    # Absolute penalties for particular effects or coordinate labels. A
    # coordinate label takes precedence over its effect.
    overrides = Dict()

    # Multiplicative per-coordinate weights, e.g. adaptive lasso weights.
    weights = Instance(np.ndarray, allow_none=True)

    # Whether to derive `weights` from a pilot unpenalized fit.
    adaptive = Bool(False)

    # Global penalties of a penalty path, in ascending order.
    grid = List(Float())

    def resolve(self, labels, nu=None, weights=None):
        """ Per-coordinate penalty vector for the given coordinate labels.
        """
        nu = self.nu if nu is None else nu
        if nu < 0:
            raise SpecError("Penalty must be nonnegative: %r" % nu)
        weights = self.weights if weights is None else weights
        values = []
        for label in labels:
            effect = label.split('[')[0]
            selected = not self.penalize or label in self.penalize or \
                effect in self.penalize
            value = nu if selected else 0.0
            if label in self.overrides:
                value = self.overrides[label]
            elif effect in self.overrides:
                value = self.overrides[effect]
            values.append(float(value))
        unknown = [name for name in list(self.penalize) + list(self.overrides)
                   if not any(name == label or name == label.split('[')[0]
                              for label in labels)]
        if unknown:
            raise SpecError("Penalty refers to unknown coordinates: %s"
                            % ', '.join(unknown))
        values = np.array(values)
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != values.shape:
                raise SpecError("Expected %d penalty weights, got %d"
                                % (len(values), weights.size))
            # Zero penalties stay zero under infinite weights.
            values = np.where(values > 0, values * weights, 0.0)
        return values

    @validate('overrides')
    def _validate_overrides(self, proposal):
        for name, value in proposal['value'].items():
            if not value >= 0:
                raise SpecError("Penalty for %r must be nonnegative" % name)
        return proposal['value']

    @validate('grid')
    def _validate_grid(self, proposal):
        grid = proposal['value']
        if any(value < 0 for value in grid) or \
                any(b < a for a, b in zip(grid, grid[1:])):
            raise SpecError("Penalty grid must be nonnegative and sorted "
                            "in ascending order")
        return grid


def soft_threshold(x, nu):
    """ Soft-thresholding sign(x) (|x| - nu)_+, elementwise.
    """
    return np.sign(x) * np.maximum(np.abs(x) - nu, 0) + 0.0


def penalty_sum(beta, nu):
    """ sum_j nu_j |beta_j|, counting zero coordinates as zero even under
    infinite penalties.
    """
    beta = np.asarray(beta)
    return float(np.sum(np.where(beta != 0, nu * np.abs(beta), 0.0)))


class Quadratic(HasTraits):
    """ Concave quadratic Q(beta) = -beta'A beta / 2 + beta'b, up to a
    constant.
    """

    A = Instance(np.ndarray)
    b = Instance(np.ndarray)

    def value(self, beta):
        return -0.5 * beta.dot(self.A).dot(beta) + beta.dot(self.b)

    def gradient(self, beta):
        return self.b - self.A.dot(beta)


def quadratic_from_state(R0, F0, s0, eta0, X=None):
    """ Quadratic approximation of the log-likelihood in eta around eta0,

        Q(eta) = -(eta - eta0)'B(eta - eta0) / 2 + (eta - eta0)'R0's0

    with B = R0'F0 R0, expressed in beta for eta = X beta.
    """
    B = R0.T.dot(F0).dot(R0)
    c = R0.T.dot(s0)
    if X is None:
        X = np.eye(len(eta0))
    return Quadratic(A=X.T.dot(B).dot(X), b=X.T.dot(B.dot(eta0) + c))


class AscentResult(HasTraits):
    """ Outcome of coordinate ascent on a penalized quadratic.
    """

    beta = Instance(np.ndarray)
    sweeps = Int()
    converged = Bool()


def coordinate_ascent(quad, nu, start=None, max_sweeps=10000, tol=1e-10):
    """ Maximize Q(beta) - sum_j nu_j |beta_j| one coordinate at a time.

    Along coordinate j the maximizer is the soft-thresholded unpenalized
    maximizer, S(beta_j + g_j / A_jj, nu_j / A_jj), where g is the gradient
    of Q. Coordinates are visited in order; sweeps stop when no coordinate
    moves by more than `tol`.
    """
    A, b = quad.A, quad.b
    k = len(b)
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (k,))
    curvature = np.diag(A)
    if np.any(curvature <= 0):
        raise SingularModelError("Quadratic is not strictly concave along "
                                 "every coordinate")
    beta = np.zeros(k) if start is None else np.array(start, dtype=float)
    for sweep in range(1, max_sweeps+1):
        gradient = b - A.dot(beta)
        largest = 0.0
        for j in range(k):
            old = beta[j]
            new = soft_threshold(old + gradient[j] / curvature[j],
                                 nu[j] / curvature[j])
            if new != old:
                gradient -= A[:, j] * (new - old)
                beta[j] = new
                largest = max(largest, abs(new - old))
        if largest <= tol:
            return AscentResult(beta=beta, sweeps=sweep, converged=True)
    return AscentResult(beta=beta, sweeps=max_sweeps, converged=False)


def subgradient_gap(gradient, beta, nu):
    """ Largest violation of the optimality conditions of a penalized
    maximization: g_j = nu_j sign(beta_j) where beta_j is nonzero, and
    |g_j| <= nu_j where it is zero.
    """
    gradient = np.asarray(gradient)
    nonzero = beta != 0
    gaps = np.where(nonzero,
                    np.abs(gradient - np.where(nonzero, nu, 0.0) *
                           np.sign(beta)),
                    np.maximum(np.abs(gradient) - nu, 0.0))
    return float(np.max(gaps, initial=0.0))


class PenalizedFitResult(FitResult):
    """ Outcome of a penalized fit.
    """

    # Per-coordinate penalties actually applied.
    nu = Instance(np.ndarray)

    # Penalized log-likelihood at the estimate.
    objective = Float()

    # True for coordinates estimated as exactly zero.
    sparsity = List(Bool())
    zero_labels = List(Unicode())

    # Total coordinate sweeps, and whether any inner problem hit the cap.
    sweeps = Int()
    sweep_limit_hit = Bool(False)


class PenalizedFitter(LoggingConfigurable):
    """ Fit an L1-penalized marginal model.
    """

    options = Instance(FitOptions, args=())
    penalty_options = Instance(PenaltyOptions, args=())

    # Most recent iteration event. Read-only.
    event = Instance(FitIteration, allow_none=True)

    def fit(self, y, model, penalty, constraint=None, theta0=None, nu=None):
        """ Maximize the penalized log-likelihood.

        Parameters
        ----------
        y : array-like
            Cell counts in lexicographic order

        model : MarginalModel
            Parameterization whose coordinates are penalized

        penalty : PenaltySpec
            Penalty weights

        constraint : ModelConstraint (optional)
            Linear model eta = X beta; the penalty then falls on beta

        theta0 : array (optional)
            Warm start, overriding the configured start

        nu : float (optional)
            Global penalty, overriding `penalty.nu`
        """
        options, stops = self.options, self.penalty_options
        y = check_counts(y, model)
        if constraint is None:
            constraint = ModelConstraint.unconstrained(model)
        if constraint.kind == 'general':
            raise SpecError("Penalized fits need a linear model eta = X beta")
        X, labels = constraint.X, list(constraint.beta_labels)
        weights = penalty.weights
        if penalty.adaptive and weights is None:
            weights = adaptive_weights(y, model, constraint, options)
        nu = penalty.resolve(labels, nu=nu, weights=weights)

        if theta0 is None:
            theta = Fitter(options=options).start_theta(y, model)
        else:
            theta = np.array(theta0, dtype=float)
        theta, beta = self._feasible_start(theta, model, X)
        def objective(parts, beta):
            return parts.loglik - penalty_sum(beta, nu)

        parts, eta, R = self._evaluate(theta, y, model)
        current = objective(parts, beta)
        result = PenalizedFitResult(algorithm='regression', nu=nu,
                                    beta_labels=labels)
        trace = []
        iteration = sweeps = 0
        while True:
            if parts.pi.min() < BOUNDARY_FLOOR:
                result.boundary = True
                result.message = ("Fitted probabilities approach the "
                                  "boundary (min %.3g)" % parts.pi.min())
                break
            # theta is mapped from X beta, so the quadratic is centred at
            # beta itself.
            quad = quadratic_from_state(R, parts.info, parts.score,
                                        X.dot(beta), X)
            ascent = coordinate_ascent(quad, nu, start=beta,
                                       max_sweeps=stops.max_sweeps,
                                       tol=stops.sweep_tol)
            sweeps += ascent.sweeps
            if not ascent.converged:
                result.sweep_limit_hit = True
                self.log.warning("Coordinate ascent stopped at the sweep "
                                 "limit %d", stops.max_sweeps)
            proposal = ascent.beta
            change = float(np.max(np.abs(proposal - beta), initial=0.0))
            if change < stops.outer_tol:
                beta = proposal
                result.converged = True
                result.message = "Converged after %d iterations" % iteration
                break
            if iteration >= options.max_iter:
                result.message = ("Did not converge in %d iterations "
                                  "(last change %.3g)" % (iteration, change))
                break

            step = self._line_search(theta, beta, proposal, current, y,
                                     model, X, objective)
            if step is None:
                # No step raises the objective; the proposal may still be
                # the maximum up to rounding.
                gap = self._proposal_gap(theta, proposal, y, model, X, nu)
                if gap is not None and gap <= stops.gap_tol:
                    beta = proposal
                    result.converged = True
                    result.message = ("Converged after %d iterations "
                                      "(objective flat)" % iteration)
                elif gap is None:
                    result.boundary = True
                    result.message = ("No admissible step: fit near the "
                                      "boundary")
                else:
                    result.message = ("No ascent step after %d iterations "
                                      "(subgradient gap %.3g)"
                                      % (iteration, gap))
                break
            theta, beta, (parts, eta, R), current, scale, halvings = step
            iteration += 1
            event = FitIteration(
                iteration=iteration, loglik=current,
                constraint_norm=float(np.max(np.abs(eta - X.dot(beta)),
                                             initial=0.0)),
                score_norm=change, step_scale=scale, halvings=halvings)
            trace.append(event)
            self.event = event
            self.log.debug("Iteration %d: penalized loglik %.10g, step %g",
                           iteration, event.loglik, scale)

        result.iterations = iteration
        result.trace = trace
        result.sweeps = sweeps
        self._fill_estimates(result, theta, beta, y, model, X, labels, nu)
        if result.converged:
            self.log.info("%s; %d zero coordinates", result.message,
                          sum(result.sparsity))
        else:
            self.log.warning("%s", result.message)
        return result

    # Private interface

    def _evaluate(self, theta, y, model):
        parts = score_and_info(theta, y, model.basis)
        return parts, eta_of_pi(model.matrices, parts.pi), model.R(parts.pi)

    def _feasible_start(self, theta, model, X):
        """ Project the starting eta on the columns of X and map it back, so
        that eta(theta) = X beta holds from the first iteration on. The
        uniform table is the fallback when the projection has no
        probabilities.
        """
        beta = linalg.lstsq(X, model.eta(theta))[0]
        try:
            return model.theta_of_eta(X.dot(beta), theta), beta
        except ConditioningError:
            self.log.warning("Projected start is incompatible; starting "
                             "from the uniform table")
            return np.zeros(model.t-1), np.zeros(X.shape[1])

    def _line_search(self, theta, beta, proposal, current, y, model, X,
                     objective):
        """ Move beta towards the proposal, halving the step until the
        penalized log-likelihood does not decrease. Returns None when no
        step qualifies.
        """
        options = self.options
        slack = 1e-13 * (1.0 + abs(current))
        scale, halvings = 1.0, 0
        while True:
            candidate_beta = beta + scale * (proposal - beta)
            try:
                candidate_theta = model.theta_of_eta(X.dot(candidate_beta),
                                                     theta)
                evaluated = self._evaluate(candidate_theta, y, model)
            except (ConditioningError, SingularModelError):
                evaluated = None
            if evaluated is not None:
                value = objective(evaluated[0], candidate_beta)
                if options.step_control == 'none' or \
                        value >= current - slack:
                    return (candidate_theta, candidate_beta, evaluated,
                            value, scale, halvings)
            if options.step_control == 'none' or \
                    halvings >= options.max_halvings:
                return None
            scale /= 2
            halvings += 1

    def _proposal_gap(self, theta, proposal, y, model, X, nu):
        """ Subgradient gap of the penalized log-likelihood at the
        proposal, or None when it has no probabilities.
        """
        try:
            theta = model.theta_of_eta(X.dot(proposal), theta)
            parts, _, R = self._evaluate(theta, y, model)
        except (ConditioningError, SingularModelError):
            return None
        return subgradient_gap(X.T.dot(R.T.dot(parts.score)), proposal, nu)

    def _fill_estimates(self, result, theta, beta, y, model, X, labels, nu):
        """ Map the estimate back to probabilities. The reported eta is
        X beta itself, so zeros in beta stay exact.
        """
        eta_hat = X.dot(beta)
        try:
            theta = model.theta_of_eta(eta_hat, theta)
        except ConditioningError as error:
            self.log.warning("%s", error)
            result.converged = False
            result.boundary = True
            result.message = str(error)
        parts, eta, R = self._evaluate(theta, y, model)
        result.theta_hat = theta
        result.pi_hat = parts.pi
        result.eta_hat = eta_hat
        result.beta_hat = beta
        result.loglik = parts.loglik
        result.objective = parts.loglik - penalty_sum(beta, nu)
        result.constraint_norm = float(np.max(np.abs(eta - eta_hat),
                                              initial=0.0))
        score = X.T.dot(R.T.dot(parts.score))
        result.score_norm = subgradient_gap(score, beta, nu)
        result.sparsity = [bool(value == 0) for value in beta]
        result.zero_labels = [label for label, zero
                              in zip(labels, result.sparsity) if zero]


def adaptive_weights(y, model, constraint, options=None):
    """ Adaptive lasso weights 1 / |beta_j| from an unpenalized pilot fit.
    """
    pilot = Fitter(options=options or FitOptions.from_library_config()).fit(
        y, model, constraint)
    if not pilot.converged:
        raise SpecError("Adaptive penalty weights need a converged pilot "
                        "fit: %s" % pilot.message)
    with np.errstate(divide='ignore'):
        return 1.0 / np.abs(pilot.beta_hat)


def penalized_fit(y, model, penalty, options=None, constraint=None,
                  penalty_options=None, **kwargs):
    """ Fit an L1-penalized model. See `PenalizedFitter.fit`.
    """
    if options is None:
        options = FitOptions.from_library_config(**kwargs)
    penalty_options = penalty_options or PenaltyOptions.from_library_config()
    fitter = PenalizedFitter(options=options, penalty_options=penalty_options)
    return fitter.fit(y, model, penalty, constraint)


class PathPoint(HasTraits):
    """ A penalized fit at one point of a penalty path.
    """

    nu = Float()
    sparsity = List(Bool())
    zero_labels = List(Unicode())
    loglik = Float()
    objective = Float()
    eta = Instance(np.ndarray)
    converged = Bool()
    result = Instance(PenalizedFitResult)


class PenaltyPath(HasTraits):
    """ Penalized fits along an ascending grid of global penalties.
    """

    points = List(Instance(PathPoint))

    @property
    def loglik_nonincreasing(self):
        """ Whether the log-likelihood does not increase along the path.
        """
        logliks = [p.loglik for p in self.points]
        return all(b <= a + 1e-8 * (1.0 + abs(a))
                   for a, b in zip(logliks, logliks[1:]))


def penalty_path(y, model, penalty, grid=None, options=None, constraint=None,
                 penalty_options=None, fitter=None):
    """ Fit along a grid of global penalties, warm-starting every point
    from the solution at the previous one.

    A `fitter` may be passed to observe its events; it then supplies the
    options.
    """
    grid = list(penalty.grid if grid is None else grid)
    if not grid:
        raise SpecError("Penalty path needs a nonempty grid")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise SpecError("Penalty grid must be sorted in ascending order")
    if fitter is None:
        fitter = PenalizedFitter(
            options=options or FitOptions.from_library_config(),
            penalty_options=penalty_options or
            PenaltyOptions.from_library_config())
    options = fitter.options
    if penalty.adaptive and penalty.weights is None:
        constraint = constraint or ModelConstraint.unconstrained(model)
        penalty = PenaltySpec(
            nu=penalty.nu, penalize=penalty.penalize,
            overrides=penalty.overrides, grid=penalty.grid,
            weights=adaptive_weights(y, model, constraint, options))
    points, theta0 = [], None
    for nu in grid:
        result = fitter.fit(y, model, penalty, constraint, theta0=theta0,
                            nu=nu)
        fitter.log.info("Penalty %g: loglik %.10g, %d zero coordinates",
                        nu, result.loglik, sum(result.sparsity))
        points.append(PathPoint(
            nu=nu, sparsity=result.sparsity, zero_labels=result.zero_labels,
            loglik=result.loglik, objective=result.objective,
            eta=result.eta_hat, converged=result.converged, result=result))
        theta0 = result.theta_hat
    return PenaltyPath(points=points)
