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

""" Exceptions raised by marginfit.

Every error carries a human-readable message suitable for the command line.
Non-convergence is not an error: fit results report it instead.
"""
from __future__ import absolute_import


class MarginfitError(Exception):
    """ Base class for all errors raised by the package.
    """


class SchemaError(MarginfitError, ValueError):
    """ Invalid table schema, cell tuple, or count vector.
    """


class SpecError(MarginfitError, ValueError):
    """ Malformed marginal log-linear parameterization.
    """


class ConditioningError(MarginfitError, ArithmeticError):
    """ A probability or marginal probability fell below the working floor,
    or a parameter vector is not finite.
    """


class SingularModelError(MarginfitError, ArithmeticError):
    """ A Jacobian or constraint system is singular at the current point.

    This signals a non-smooth point of the model or an incomplete
    parameterization.
    """


class RankDeficientError(MarginfitError, ValueError):
    """ A constraint or design matrix does not have the stated rank.
    """


class CollinearityError(RankDeficientError):
    """ The normal equations of a covariate fit are singular.
    """

    def __init__(self, message, columns=()):
        super(CollinearityError, self).__init__(message)
        self.columns = list(columns)


class ModelFileError(MarginfitError, ValueError):
    """ Error in a model file, anchored to a line when possible.
    """

    def __init__(self, message, filename=None, lineno=None):
        self.filename = filename
        self.lineno = lineno
        if filename is not None and lineno is not None:
            message = "%s:%d: %s" % (filename, lineno, message)
        elif filename is not None:
            message = "%s: %s" % (filename, message)
        super(ModelFileError, self).__init__(message)
