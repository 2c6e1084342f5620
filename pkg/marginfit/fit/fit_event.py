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

from traitlets import HasTraits, Float, Int


class FitIteration(HasTraits):
    """ Event emitted by a fitter after each accepted update.

    Fitters publish the most recent event in their `event` trait; observe
    that trait to follow a fit as it runs.
    """

    # Number of updates taken so far.
    iteration = Int()

    # Log-likelihood (or penalized log-likelihood) at the new point.
    loglik = Float()

    # Max-norm of the constraint residual at the new point.
    constraint_norm = Float()

    # Max-norm of the projected score at the new point.
    score_norm = Float()

    # Scale applied to the proposed update.
    step_scale = Float(1.0)

    # Number of step halvings performed.
    halvings = Int(0)

    def as_dict(self):
        return {
            'iteration': self.iteration,
            'loglik': self.loglik,
            'constraint_norm': self.constraint_norm,
            'score_norm': self.score_norm,
            'step_scale': self.step_scale,
            'halvings': self.halvings,
        }
