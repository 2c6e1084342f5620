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

""" Constrained maximum likelihood for marginal log-linear models.

Two update rules are provided. The Aitchison-Silvey update solves the
linearized Lagrangian system

    [ F  -H ] [theta - theta0]   [s]
    [-H'  0 ] [    lambda    ] = [h]

at theta0. The regression update maximizes the quadratic approximation of
the log-likelihood over eta = X beta, with theta linearized around theta0
through R = d theta / d eta'. For any K with complement X the two produce
identical theta proposals, so fits differ only in cost and in how step
halving interacts with the proposals.

General constraints A log(M pi) = 0 are fitted by the Aitchison-Silvey
update, or by the regression update with a complement X0 of the constraint
derivative recomputed at every iteration.
"""
from __future__ import absolute_import

import numpy as np
from pathlib2 import Path
from scipy import linalg
from traitlets import Any, Bool, Enum, Float, HasTraits, Instance, Int, \
    List, TraitError, Unicode, validate
from traitlets.config import Configurable, LoggingConfigurable, \
    PyFileConfigLoader

import marginfit
from ..core.errors import ConditioningError, SchemaError, \
    SingularModelError
from ..core.likelihood import LikelihoodParts, beta_score, info_solve, \
    observed_info, observed_info_numeric, score_and_info
from ..core.mllp import eta_of_pi
from ..core.table import pi_to_theta
from .constraint import ModelConstraint, constraint_h_and_H, null_space_X, \
    right_inverse
from .fit_event import FitIteration

# Probability below which a fit is declared to drift to the boundary.
BOUNDARY_FLOOR = 1e-10

# Ratio of smallest to largest observed-information eigenvalue below which
# a converged fit is taken to sit on the boundary.
INFO_COLLAPSE = 1e-9


def library_config():
    """ Load the library defaults from `marginfit/config.py`.
    """
    config_path = Path(marginfit.__file__).parent.joinpath("config.py")
    return PyFileConfigLoader(str(config_path)).load_config()


def check_counts(y, model):
    """ Coerce counts to a float vector, checking them against the model.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (model.t,):
        raise SchemaError("Expected %d counts, got %d" % (model.t, y.size))
    if np.any(y < 0) or not np.all(np.isfinite(y)) or y.sum() <= 0:
        raise SchemaError("Counts must be nonnegative and not all zero")
    return y


class FitOptions(Configurable):
    """ Tunable options of the constrained fitters.

    Library defaults are read from `marginfit/config.py`.
    """

    # Update rule: 'lagrangian' (Aitchison-Silvey) or 'regression'.
    algorithm = Enum(['lagrangian', 'regression'],
                     default_value='lagrangian').tag(config=True)

    max_iter = Int(200).tag(config=True)

    # Convergence tolerances on the max-norm of the constraint residual and
    # of the projected score.
    tol_constraint = Float(1e-8).tag(config=True)
    tol_score = Float(1e-8).tag(config=True)

    # Step-length control on the theta update.
    step_control = Enum(['none', 'halving'],
                        default_value='halving').tag(config=True)
    max_halvings = Int(20).tag(config=True)

    # The merit function is loglik - merit_weight * n * |h|^2.
    merit_weight = Float(10.0).tag(config=True)

    # Starting point: smoothed empirical, uniform, or `theta0`.
    start = Enum(['empirical', 'uniform', 'user'],
                 default_value='empirical').tag(config=True)

    # How the observed information is computed at convergence.
    observed_info_method = Enum(['closed_form', 'numeric'],
                                default_value='closed_form').tag(config=True)

    # User starting point, used when `start` is 'user'.
    theta0 = Instance(np.ndarray, allow_none=True)

    @classmethod
    def from_library_config(cls, **kwargs):
        """ Create options from the library config file.
        """
        return cls(config=library_config(), **kwargs)

    @validate('max_iter', 'max_halvings')
    def _validate_counts(self, proposal):
        if proposal['value'] < (1 if proposal['trait'].name == 'max_iter'
                                else 0):
            raise TraitError("%s out of range: %r"
                             % (proposal['trait'].name, proposal['value']))
        return proposal['value']

    @validate('tol_constraint', 'tol_score', 'merit_weight')
    def _validate_positive(self, proposal):
        if not proposal['value'] > 0:
            raise TraitError("%s must be positive"
                             % proposal['trait'].name)
        return proposal['value']


class FitState(HasTraits):
    """ Quantities evaluated at the current canonical parameters.
    """

    theta = Instance(np.ndarray)
    parts = Instance(LikelihoodParts)
    eta = Instance(np.ndarray, allow_none=True)

    # d theta / d eta', when the parameterization is needed.
    R = Instance(np.ndarray, allow_none=True)

    # Constraint values and derivative H = dh'/dtheta.
    h = Instance(np.ndarray)
    H = Instance(np.ndarray)

    # Regression coefficients, for the regression update.
    beta = Instance(np.ndarray, allow_none=True)

    @property
    def pi(self):
        return self.parts.pi


class Proposal(HasTraits):
    """ Unscaled update proposed from a state.
    """

    theta = Instance(np.ndarray)

    # Change in theta, theta - theta0.
    delta = Instance(np.ndarray)

    # Proposed regression coefficients (regression updates).
    beta = Instance(np.ndarray, allow_none=True)

    # Lagrange multipliers (Aitchison-Silvey updates).
    lagrange = Instance(np.ndarray, allow_none=True)


class FitResult(HasTraits):
    """ Outcome of a constrained fit.
    """

    algorithm = Unicode()
    theta_hat = Instance(np.ndarray)
    pi_hat = Instance(np.ndarray)
    eta_hat = Instance(np.ndarray, allow_none=True)
    beta_hat = Instance(np.ndarray, allow_none=True)
    beta_labels = List(Unicode())
    lambda_hat = Instance(np.ndarray, allow_none=True)
    loglik = Float()

    iterations = Int()
    converged = Bool(False)
    boundary = Bool(False)
    message = Unicode()

    # Max-norms of the constraint residual and projected score.
    constraint_norm = Float()
    score_norm = Float()

    # Observed information with respect to beta, its eigenvalues, and the
    # resulting verdict (None when not computed).
    observed_info = Instance(np.ndarray, allow_none=True)
    info_eigenvalues = Instance(np.ndarray, allow_none=True)
    local_max = Any(None)
    std_errors = Instance(np.ndarray, allow_none=True)

    trace = List(Instance(FitIteration))


def evaluate_state(theta, y, model, constraint, need_R=True, beta=None):
    """ Evaluate likelihood quantities and constraints at theta.
    """
    theta = np.asarray(theta, dtype=float)
    parts = score_and_info(theta, y, model.basis)
    h, H = constraint_h_and_H(theta, constraint, model)
    eta = eta_of_pi(model.matrices, parts.pi)
    R = model.R(parts.pi) if need_R else None
    return FitState(theta=theta, parts=parts, eta=eta, R=R, h=h, H=H,
                    beta=beta)


def as_update(state, model):
    """ Aitchison-Silvey update

        theta = theta0 + F^-1 s - F^-1 H (H'F^-1 H)^-1 (H'F^-1 s + h)

    with the Lagrange multipliers of the linearized system.
    """
    parts, H, h = state.parts, state.H, state.h
    Finv_s = info_solve(parts, parts.score, model.basis)
    if H.shape[1] == 0:
        return Proposal(theta=state.theta + Finv_s, delta=Finv_s,
                        lagrange=np.zeros(0))
    Finv_H = info_solve(parts, H, model.basis)
    S = H.T.dot(Finv_H)
    try:
        lagrange = -linalg.solve(S, H.T.dot(Finv_s) + h, assume_a='pos')
    except (linalg.LinAlgError, ValueError):
        raise SingularModelError(
            "H'F^-1 H is singular: the model is not smooth at this point")
    if not np.all(np.isfinite(lagrange)):
        raise SingularModelError(
            "H'F^-1 H is singular: the model is not smooth at this point")
    delta = Finv_s + Finv_H.dot(lagrange)
    return Proposal(theta=state.theta + delta, delta=delta,
                    lagrange=lagrange)


def regression_update(state, X):
    """ Regression update for eta = X beta:

        beta - beta0 = (X'F X)^-1 X'(F gamma0 + s)
        theta - theta0 = R0 [X (beta - beta0) - gamma0]

    with F and s the information and score relative to eta and
    gamma0 = eta0 - X beta0.
    """
    R, parts = state.R, state.parts
    beta0 = state.beta
    if beta0 is None:
        beta0 = linalg.lstsq(X, state.eta)[0] if X.shape[1] else \
            np.zeros(0)
    gamma0 = state.eta - X.dot(beta0)
    s_eta = R.T.dot(parts.score)
    F_eta = R.T.dot(parts.info).dot(R)
    if X.shape[1]:
        normal = X.T.dot(F_eta).dot(X)
        try:
            step = linalg.solve(normal, X.T.dot(F_eta.dot(gamma0) + s_eta),
                                assume_a='pos')
        except (linalg.LinAlgError, ValueError):
            raise SingularModelError(
                "X'FX is singular: the design is collinear")
    else:
        step = np.zeros(0)
    delta = R.dot(X.dot(step) - gamma0)
    return Proposal(theta=state.theta + delta, delta=delta,
                    beta=beta0 + step)


def general_constraint_update(state):
    """ Regression update for general constraints h(theta) = 0:

        beta - beta0 = (X0'F X0)^-1 X0'[s + F (Kbar h - X0 beta0)]
        theta - theta0 = X0 beta - Kbar h

    where K0' = H' is the constraint derivative at theta0, Kbar a right
    inverse of K0' and X0 spans the orthogonal complement of K0. Taking
    beta0 = 0 places theta0 at the origin of the local coordinates.
    """
    parts, H, h = state.parts, state.H, state.h
    X0 = null_space_X(H)
    Kbar_h = right_inverse(H.T).dot(h) if H.shape[1] else \
        np.zeros_like(state.theta)
    if X0.shape[1]:
        normal = X0.T.dot(parts.info).dot(X0)
        try:
            beta = linalg.solve(
                normal, X0.T.dot(parts.score + parts.info.dot(Kbar_h)),
                assume_a='pos')
        except (linalg.LinAlgError, ValueError):
            raise SingularModelError(
                "X0'F X0 is singular: the model is not smooth at this point")
    else:
        beta = np.zeros(0)
    delta = X0.dot(beta) - Kbar_h
    return Proposal(theta=state.theta + delta, delta=delta, beta=beta)


class Fitter(LoggingConfigurable):
    """ Fit a constrained marginal model by maximum likelihood.
    """

    options = Instance(FitOptions, args=())

    # Most recent iteration event. Read-only.
    event = Instance(FitIteration, allow_none=True)

    def fit(self, y, model, constraint=None):
        """ Fit the model to a vector of counts.

        Parameters
        ----------
        y : array-like
            Cell counts in lexicographic order

        model : MarginalModel
            Parameterization and canonical basis

        constraint : ModelConstraint (optional)
            Model constraints, by default none (the saturated model)

        Returns
        -------
        A `FitResult`. Non-convergence is reported, not raised.
        """
        options = self.options
        y = check_counts(y, model)
        if constraint is None:
            constraint = ModelConstraint.unconstrained(model)
        n = y.sum()
        general = constraint.kind == 'general'
        algorithm = options.algorithm
        need_R = not general

        theta = self.start_theta(y, model)
        result = FitResult(algorithm=algorithm,
                           beta_labels=list(constraint.beta_labels))
        trace = []
        state = evaluate_state(theta, y, model, constraint, need_R=need_R)
        if algorithm == 'regression' and not general:
            state.beta = linalg.lstsq(constraint.X, state.eta)[0] \
                if constraint.X.shape[1] else np.zeros(0)

        weight = options.merit_weight * n
        def merit(loglik, h):
            return loglik - weight * h.dot(h)

        iteration = 0
        while True:
            # Near the boundary the score vanishes with the small cell
            # probabilities, so drift is checked before convergence.
            if state.pi.min() < BOUNDARY_FLOOR:
                result.boundary = True
                result.message = self._boundary_message(state.pi)
                break
            h_norm = np.max(np.abs(state.h), initial=0.0)
            score_norm = self._score_norm(state, constraint)
            if h_norm <= options.tol_constraint and \
                    score_norm <= options.tol_score:
                # An expected count below the score tolerance leaves the
                # score unable to pull the cell back from zero.
                if n * state.pi.min() <= options.tol_score:
                    result.boundary = True
                    result.message = self._boundary_message(state.pi)
                    break
                result.converged = True
                result.message = "Converged after %d iterations" % iteration
                break
            if iteration >= options.max_iter:
                result.message = ("Did not converge in %d iterations "
                                  "(constraint %.3g, score %.3g)"
                                  % (iteration, h_norm, score_norm))
                break

            if algorithm == 'lagrangian':
                proposal = as_update(state, model)
            elif general:
                proposal = general_constraint_update(state)
            else:
                proposal = regression_update(state, constraint.X)

            try:
                state, scale, halvings = self._take_step(
                    state, proposal, y, model, constraint, merit, need_R)
            except ConditioningError:
                result.boundary = True
                result.message = self._boundary_message(state.pi)
                break
            iteration += 1
            event = FitIteration(
                iteration=iteration, loglik=state.parts.loglik,
                constraint_norm=float(np.max(np.abs(state.h), initial=0.0)),
                score_norm=self._score_norm(state, constraint),
                step_scale=scale, halvings=halvings)
            trace.append(event)
            self.event = event
            self.log.debug("Iteration %d: loglik %.10g, |h| %.3g, step %g",
                           iteration, event.loglik, event.constraint_norm,
                           scale)

        result.iterations = iteration
        result.trace = trace
        self._fill_estimates(result, state, y, model, constraint)
        if result.converged:
            self.log.info("%s", result.message)
            self._verify_maximum(result, state, y, model, constraint)
        else:
            self.log.warning("%s", result.message)
        return result

    def start_theta(self, y, model):
        """ Starting canonical parameters according to the options.
        """
        start = self.options.start
        t = model.t
        if start == 'user':
            theta0 = self.options.theta0
            if theta0 is None or theta0.shape != (t-1,):
                raise ValueError("A user start needs theta0 of length %d"
                                 % (t-1))
            return np.array(theta0, dtype=float)
        if start == 'uniform':
            return np.zeros(t-1)
        n = y.sum()
        return pi_to_theta((y + 0.5) / (n + t / 2.0), model.basis)

    # Private interface

    def _take_step(self, state, proposal, y, model, constraint, merit,
                   need_R):
        """ Apply the proposal, halving the theta step until the merit
        function does not decrease.
        """
        options = self.options
        current = merit(state.parts.loglik, state.h)
        slack = 1e-12 * (1.0 + abs(current))
        scale, halvings = 1.0, 0
        beta0, beta1 = state.beta, proposal.beta
        while True:
            theta = state.theta + scale * proposal.delta
            beta = None
            if beta1 is not None and beta0 is not None:
                beta = beta0 + scale * (beta1 - beta0)
            try:
                candidate = evaluate_state(theta, y, model, constraint,
                                           need_R=need_R, beta=beta)
            except ConditioningError:
                candidate = None
            last = options.step_control == 'none' or \
                halvings >= options.max_halvings
            if candidate is not None and (
                    last or merit(candidate.parts.loglik, candidate.h)
                    >= current - slack):
                if last and options.step_control == 'halving' and \
                        halvings:
                    self.log.warning("Step halving exhausted after %d "
                                     "halvings", halvings)
                return candidate, scale, halvings
            if last:
                raise ConditioningError("No admissible step from the "
                                        "current point")
            scale /= 2
            halvings += 1

    def _score_norm(self, state, constraint):
        """ Max-norm of the score projected on the model's tangent space.
        """
        if constraint.kind == 'general':
            X0 = null_space_X(state.H)
            projected = X0.T.dot(state.parts.score)
        else:
            projected = constraint.X.T.dot(state.R.T.dot(state.parts.score))
        return float(np.max(np.abs(projected), initial=0.0))

    def _boundary_message(self, pi):
        return ("Fitted probabilities approach the boundary (min %.3g); the "
                "maximum likelihood estimate may not exist because of "
                "observed zeros" % pi.min())

    def _fill_estimates(self, result, state, y, model, constraint):
        result.theta_hat = state.theta
        result.pi_hat = state.pi
        result.eta_hat = state.eta
        result.loglik = state.parts.loglik
        result.constraint_norm = float(np.max(np.abs(state.h), initial=0.0))
        result.score_norm = self._score_norm(state, constraint)
        if constraint.kind != 'general':
            X = constraint.X
            result.beta_hat = linalg.lstsq(X, state.eta)[0] \
                if X.shape[1] else np.zeros(0)
        if result.algorithm == 'lagrangian':
            try:
                result.lambda_hat = as_update(state, model).lagrange
            except SingularModelError:
                result.lambda_hat = None

    def _verify_maximum(self, result, state, y, model, constraint):
        """ Observed information with respect to beta and its eigenvalues.
        """
        theta = state.theta
        try:
            if constraint.kind == 'general':
                J = self._general_observed_info(state, y, model, constraint)
            elif self.options.observed_info_method == 'numeric':
                X = constraint.X
                def gradient(beta):
                    theta_b = model.theta_of_eta(X.dot(beta), theta)
                    return beta_score(theta_b, y, model.matrices,
                                      model.basis, X)
                J = observed_info_numeric(gradient, result.beta_hat)
            else:
                J = observed_info(theta, y, model.matrices, model.basis,
                                  constraint.X)
        except (ConditioningError, SingularModelError) as error:
            self.log.warning("Observed information unavailable: %s", error)
            return
        eigenvalues = np.linalg.eigvalsh((J + J.T) / 2) if len(J) else \
            np.zeros(0)
        result.observed_info = J
        result.info_eigenvalues = eigenvalues
        magnitudes = np.abs(eigenvalues)
        if len(J) and magnitudes.min() < INFO_COLLAPSE * magnitudes.max():
            result.converged = False
            result.boundary = True
            result.message = ("Observed information is nearly singular "
                              "(eigenvalues %.3g to %.3g): %s"
                              % (eigenvalues.min(), eigenvalues.max(),
                                 self._boundary_message(state.pi)))
            self.log.warning("%s", result.message)
            return
        result.local_max = bool(np.all(eigenvalues > 0))
        if result.local_max and len(J):
            result.std_errors = np.sqrt(np.diag(np.linalg.inv(J)))
        if not result.local_max:
            self.log.warning("Stationary point is not a local maximum: "
                             "smallest eigenvalue %.3g", eigenvalues.min())

    def _general_observed_info(self, state, y, model, constraint):
        """ Tangent-space Hessian of the Lagrangian l + lambda'h for
        general constraints, by central differences of its gradient.
        """
        H = state.H
        lagrange = -linalg.lstsq(H, state.parts.score)[0] if H.shape[1] \
            else np.zeros(0)
        def gradient(theta):
            parts = score_and_info(theta, y, model.basis)
            _, H_theta = constraint_h_and_H(theta, constraint, model)
            return parts.score + H_theta.dot(lagrange)
        J_theta = observed_info_numeric(gradient, state.theta)
        X0 = null_space_X(H)
        return X0.T.dot(J_theta).dot(X0)


def fit(y, model, constraint=None, options=None, **kwargs):
    """ Fit a constrained marginal model. See `Fitter.fit`.

    Extra keyword arguments override the library options.
    """
    if options is None:
        options = FitOptions.from_library_config(**kwargs)
    else:
        for name, value in kwargs.items():
            setattr(options, name, value)
    return Fitter(options=options).fit(y, model, constraint)


class MultiStartResult(HasTraits):
    """ Results of fitting from several starting points.
    """

    results = List(Instance(FitResult))

    @property
    def best(self):
        """ Converged result with the highest log-likelihood, if any.
        """
        converged = [r for r in self.results if r.converged]
        return max(converged, key=lambda r: r.loglik) if converged else None


def fit_multistart(y, model, constraint=None, options=None, n_starts=5,
                   seed=None, scale=0.5, observer=None):
    """ Fit from the configured start and from `n_starts` random starting
    points theta0 ~ N(0, scale^2), to check that a maximum is global.

    An `observer` callable, if given, watches the `event` trait of every
    fitter.
    """
    options = options or FitOptions.from_library_config()
    rng = np.random.RandomState(seed)
    def run(fit_options):
        fitter = Fitter(options=fit_options)
        if observer is not None:
            fitter.observe(observer, 'event')
        return fitter.fit(y, model, constraint)
    results = [run(options)]
    for _ in range(n_starts):
        random_options = FitOptions(
            config=options.config, algorithm=options.algorithm,
            max_iter=options.max_iter, tol_constraint=options.tol_constraint,
            tol_score=options.tol_score, step_control=options.step_control,
            max_halvings=options.max_halvings,
            merit_weight=options.merit_weight,
            observed_info_method=options.observed_info_method,
            start='user', theta0=rng.normal(scale=scale, size=model.t-1))
        results.append(run(random_options))
    return MultiStartResult(results=results)
