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

""" Marginal models with individual-level or stratum-level covariates.

Each unit i (an individual, or a stratum of individuals sharing covariate
values) has its own marginal log-linear parameters eta_i = X_i beta. The
regression update

    beta - beta0 = (sum_i X_i' W_i X_i)^-1 sum_i X_i'(W_i gamma_i + R_i's_i)

with W_i = R_i' F_i R_i and gamma_i = eta_i - X_i beta0, needs only q x q
normal equations accumulated unit by unit, so the cost of an iteration is
linear in the number of units. Individuals are strata of size one.
"""
from __future__ import absolute_import

import numpy as np
from scipy import linalg
from traitlets import Float, HasTraits, Instance, List, Unicode, validate
from traitlets.config import LoggingConfigurable

from ..core.errors import CollinearityError, ConditioningError, \
    SchemaError, SingularModelError
from ..core.likelihood import observed_info
from ..core.mllp import MARGIN_FLOOR, MAX_CONDITION
from ..core.table import pi_to_theta
from .fit_event import FitIteration
from .solver import BOUNDARY_FLOOR, FitOptions, FitResult
from .constraint import column_rank


class StratifiedData(HasTraits):
    """ Responses and per-unit design matrices.
    """

    # n x t array of response counts: one-hot rows for individuals or
    # frequency tables for strata.
    y = Instance(np.ndarray)

    # n x (t-1) x q array stacking the unit design matrices X_i.
    X = Instance(np.ndarray)

    # Names of the q columns of the designs.
    beta_labels = List(Unicode())

    # Identifier of each unit.
    unit_ids = List()

    @property
    def n(self):
        """ Number of units.
        """
        return self.y.shape[0]

    @property
    def q(self):
        return self.X.shape[2]

    @validate('y')
    def _validate_y(self, proposal):
        y = np.asarray(proposal['value'], dtype=float)
        if y.ndim != 2 or np.any(y < 0) or not np.all(np.isfinite(y)):
            raise SchemaError("Responses must be a nonnegative n x t array")
        return y

    @classmethod
    def from_units(cls, units, beta_labels=None, unit_ids=None):
        """ Create data from (y_i, X_i) pairs, dropping empty strata.
        """
        units = list(units)
        if unit_ids is None:
            unit_ids = list(range(len(units)))
        keep = [k for k, (y, _) in enumerate(units) if np.sum(y) > 0]
        y = np.array([units[k][0] for k in keep], dtype=float)
        X = np.array([units[k][1] for k in keep], dtype=float)
        q = X.shape[2]
        if beta_labels is None:
            beta_labels = ['b%d' % (j+1) for j in range(q)]
        data = cls(y=y, X=X, beta_labels=list(beta_labels),
                   unit_ids=[unit_ids[k] for k in keep])
        check_design_rank(data)
        return data


def check_design_rank(data):
    """ Check that the stacked design has full column rank, without
    building it, from the accumulated cross-product sum_i X_i'X_i.
    """
    cross = np.einsum('ikp,ikq->pq', data.X, data.X)
    deficient = deficient_columns(cross)
    if deficient:
        names = [data.beta_labels[j] for j in deficient]
        raise CollinearityError(
            "The stacked design is not of full column rank; columns "
            "linearly dependent on the others: %s" % ', '.join(names),
            columns=names)


def deficient_columns(normal):
    """ Columns of a symmetric matrix outside its leading pivoted-QR basis.
    """
    if column_rank(normal) == normal.shape[1]:
        return []
    _, R, piv = linalg.qr(normal, pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * diag[0])) if diag[0] > 0 else 0
    return sorted(int(j) for j in piv[rank:])


class UnitStates(HasTraits):
    """ Per-unit quantities at the current canonical parameters.
    """

    thetas = Instance(np.ndarray)
    pis = Instance(np.ndarray)
    etas = Instance(np.ndarray)
    scores = Instance(np.ndarray)
    infos = Instance(np.ndarray)
    Rs = Instance(np.ndarray)
    loglik = Float()


def evaluate_units(thetas, data, model):
    """ Evaluate probabilities, scores, informations and Jacobians of all
    units at once.
    """
    G, C, M = model.basis.G, model.matrices.C, model.matrices.M
    logits = thetas.dot(G.T)
    logits -= logits.max(axis=1, keepdims=True)
    pis = np.exp(logits)
    pis /= pis.sum(axis=1, keepdims=True)
    margins = pis.dot(M.T)
    if np.any(margins < MARGIN_FLOOR):
        raise ConditioningError(
            "Marginal probability %.3g below the floor %g"
            % (margins.min(), MARGIN_FLOOR))
    etas = np.log(margins).dot(C.T)

    sizes = data.y.sum(axis=1)
    scores = (data.y - sizes[:, np.newaxis] * pis).dot(G)
    Gpi = pis.dot(G)
    infos = sizes[:, np.newaxis, np.newaxis] * (
        np.einsum('ta,it,tb->iab', G, pis, G) -
        Gpi[:, :, np.newaxis] * Gpi[:, np.newaxis, :])

    weighted = M[np.newaxis, :, :] * pis[:, np.newaxis, :] / \
        margins[:, :, np.newaxis]
    jacobians = np.matmul(np.matmul(C, weighted), G)
    conds = np.linalg.cond(jacobians)
    if not np.all(np.isfinite(conds)) or np.any(conds > MAX_CONDITION):
        raise SingularModelError(
            "Jacobian of unit %d is singular: the point is not smooth"
            % int(np.argmax(np.where(np.isfinite(conds), conds, np.inf))))
    Rs = np.linalg.inv(jacobians)
    loglik = float(np.sum(data.y * np.log(pis)))
    return UnitStates(thetas=thetas, pis=pis, etas=etas, scores=scores,
                      infos=infos, Rs=Rs, loglik=loglik)


def covariate_score(units, data):
    """ Score with respect to beta, sum_i X_i' R_i' s_i.
    """
    s_eta = np.einsum('iab,ia->ib', units.Rs, units.scores)
    return np.einsum('ikq,ik->q', data.X, s_eta)


def covariate_update(units, data, beta0):
    """ Proposed beta and per-unit theta updates from the current units.

    Returns (beta, deltas) where deltas[i] = R_i (X_i beta - eta_i) is the
    change in theta_i.
    """
    X, Rs = data.X, units.Rs
    W = np.matmul(np.matmul(np.transpose(Rs, (0, 2, 1)), units.infos), Rs)
    gammas = units.etas - np.einsum('ikq,q->ik', X, beta0)
    s_eta = np.einsum('iab,ia->ib', Rs, units.scores)
    WX = np.matmul(W, X)
    normal = np.einsum('ikp,ikq->pq', X, WX)
    rhs = np.einsum('ikq,ik->q', X,
                    np.einsum('iab,ib->ia', W, gammas) + s_eta)
    deficient = deficient_columns(normal)
    if deficient:
        names = [data.beta_labels[j] for j in deficient]
        raise CollinearityError(
            "Normal equations are singular; collinear design columns: %s"
            % ', '.join(names), columns=names)
    beta = beta0 + linalg.solve(normal, rhs, assume_a='pos')
    targets = np.einsum('ikq,q->ik', X, beta)
    deltas = np.einsum('iab,ib->ia', Rs, targets - units.etas)
    return beta, deltas


class CovariateFitResult(FitResult):
    """ Outcome of a covariate fit. Per-unit estimates are stacked by row.
    """

    unit_ids = List()


class CovariateFitter(LoggingConfigurable):
    """ Fit eta_i = X_i beta by the per-unit regression algorithm.
    """

    options = Instance(FitOptions, args=())

    # Most recent iteration event. Read-only.
    event = Instance(FitIteration, allow_none=True)

    def fit(self, data, model, beta0=None):
        """ Fit the model to stratified data.

        Starting values for every unit are the canonical parameters of the
        smoothed pooled table.
        """
        options = self.options
        if data.y.shape[1] != model.t or data.X.shape[1] != model.t-1:
            raise SchemaError("Data do not match a table with %d cells"
                              % model.t)
        pooled = data.y.sum(axis=0)
        total = pooled.sum()
        theta0 = pi_to_theta((pooled + 0.5) / (total + model.t / 2.0),
                             model.basis)
        thetas = np.tile(theta0, (data.n, 1))
        units = evaluate_units(thetas, data, model)
        if beta0 is None:
            cross = np.einsum('ikp,ikq->pq', data.X, data.X)
            beta0 = linalg.solve(cross, np.einsum('ikq,ik->q', data.X,
                                                  units.etas))
        beta = np.asarray(beta0, dtype=float)

        weight = options.merit_weight * total
        def merit(units, beta):
            gammas = units.etas - np.einsum('ikq,q->ik', data.X, beta)
            return units.loglik - weight * np.sum(gammas ** 2)

        result = CovariateFitResult(algorithm='regression',
                                    beta_labels=list(data.beta_labels),
                                    unit_ids=list(data.unit_ids))
        trace = []
        iteration = 0
        while True:
            small = units.pis.min(axis=1)
            if small.min() < BOUNDARY_FLOOR:
                result.boundary = True
                result.message = (
                    "Fitted probabilities of unit %r approach the boundary "
                    "(min %.3g)" % (data.unit_ids[int(np.argmin(small))],
                                    small.min()))
                break
            residual = self._residual(units, data, beta)
            score_norm = float(np.max(np.abs(covariate_score(units, data))))
            if residual <= options.tol_constraint and \
                    score_norm <= options.tol_score:
                result.converged = True
                result.message = "Converged after %d iterations" % iteration
                break
            if iteration >= options.max_iter:
                result.message = ("Did not converge in %d iterations "
                                  "(constraint %.3g, score %.3g)"
                                  % (iteration, residual, score_norm))
                break

            beta_hat, deltas = covariate_update(units, data, beta)
            current = merit(units, beta)
            slack = 1e-12 * (1.0 + abs(current))
            scale, halvings = 1.0, 0
            while True:
                candidate_beta = beta + scale * (beta_hat - beta)
                try:
                    candidate = evaluate_units(units.thetas + scale * deltas,
                                               data, model)
                except ConditioningError:
                    candidate = None
                last = options.step_control == 'none' or \
                    halvings >= options.max_halvings
                if candidate is not None and (
                        last or merit(candidate, candidate_beta) >=
                        current - slack):
                    break
                if last:
                    break
                scale /= 2
                halvings += 1
            if candidate is None:
                result.boundary = True
                result.message = "No admissible step: fit near the boundary"
                break
            units, beta = candidate, candidate_beta
            iteration += 1
            event = FitIteration(
                iteration=iteration, loglik=units.loglik,
                constraint_norm=self._residual(units, data, beta),
                score_norm=float(np.max(np.abs(
                    covariate_score(units, data)))),
                step_scale=scale, halvings=halvings)
            trace.append(event)
            self.event = event
            self.log.debug("Iteration %d: loglik %.10g, step %g",
                           iteration, units.loglik, scale)

        result.iterations = iteration
        result.trace = trace
        result.beta_hat = beta
        result.theta_hat = units.thetas
        result.pi_hat = units.pis
        result.eta_hat = units.etas
        result.loglik = units.loglik
        result.constraint_norm = self._residual(units, data, beta)
        result.score_norm = float(np.max(np.abs(
            covariate_score(units, data))))
        if result.converged:
            self.log.info("%s", result.message)
            self._verify_maximum(result, units, data, model)
        else:
            self.log.warning("%s", result.message)
        return result

    def _residual(self, units, data, beta):
        gammas = units.etas - np.einsum('ikq,q->ik', data.X, beta)
        return float(np.max(np.abs(gammas)))

    def _verify_maximum(self, result, units, data, model):
        """ Observed information summed across units.
        """
        J = np.zeros((data.q, data.q))
        try:
            for i in range(data.n):
                J += observed_info(units.thetas[i], data.y[i],
                                   model.matrices, model.basis, data.X[i])
        except (ConditioningError, SingularModelError) as error:
            self.log.warning("Observed information unavailable: %s", error)
            return
        eigenvalues = np.linalg.eigvalsh((J + J.T) / 2)
        result.observed_info = J
        result.info_eigenvalues = eigenvalues
        result.local_max = bool(np.all(eigenvalues > 0))
        if result.local_max:
            result.std_errors = np.sqrt(np.diag(np.linalg.inv(J)))


def fit_covariates(data, model, options=None, **kwargs):
    """ Fit a covariate model. See `CovariateFitter.fit`.
    """
    if options is None:
        options = FitOptions.from_library_config(**kwargs)
    return CovariateFitter(options=options).fit(data, model)


def design_from_covariates(model, covariates, names, formula):
    """ Per-unit designs from covariate values and a main-effects formula.

    Parameters
    ----------
    model : MarginalModel
        Parameterization whose effects the formula refers to

    covariates : array of shape (n, p)
        Covariate values of each unit

    names : list of str
        Covariate names, one per column of `covariates`

    formula : dict
        Maps effect names to lists of covariate names. Every coordinate of
        a listed effect gets an intercept plus one slope per covariate;
        effects not listed are fixed at zero.

    Returns
    -------
    (X, beta_labels) with X of shape (n, t-1, q)
    """
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    n = covariates.shape[0]
    columns, labels = [], []
    for effect, used in formula.items():
        index = []
        for name in used:
            if name not in names:
                raise SchemaError("Unknown covariate %r for effect %r"
                                  % (name, effect))
            index.append(names.index(name))
        for k in model.effect_coordinates(effect):
            label = model.labels[k]
            columns.append((k, None))
            labels.append('%s:(Intercept)' % label)
            for name, j in zip(used, index):
                columns.append((k, j))
                labels.append('%s:%s' % (label, name))
    X = np.zeros((n, model.t-1, len(columns)))
    for col, (k, j) in enumerate(columns):
        X[:, k, col] = 1.0 if j is None else covariates[:, j]
    return X, labels
