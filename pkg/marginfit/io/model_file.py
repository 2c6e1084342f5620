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

""" Model files: JSON documents describing a marginal model fit.

A model file has the blocks

    schema      {"variables": [{"name": "A", "levels": 2}, ...]}
    mllp        {"margins": [["A"], ["B"], ["A", "B"]],
                 "effects": [[["A"], 0], ...], "coding": "baseline"}
    constraint  {"zero": ["A:B"]} | {"K": ...} | {"X": ...} |
                {"general": {"A": ..., "margins": [["A", "B"]]}}
    covariates  {"formula": {"A": ["age"]}} | {"design": "design.csv"}
    penalty     {"nu": 1.0, "penalize": ["A:B"], "overrides": {},
                 "adaptive": false, "grid": [...] or
                 {"start": 0.1, "stop": 10, "num": 10, "log": true}}
    options     fit and penalty options, plus "seed" and "multi_start"

of which only `schema` and `mllp` are required. Matrices are given inline
as nested lists or as CSV paths relative to the model file. Margins and
effects may also be written as strings such as "A:B".
"""
from __future__ import absolute_import

import json
import re

import numpy as np
import pandas as pd
from pathlib2 import Path
from traitlets import Dict, HasTraits, Instance

from ..core.errors import MarginfitError, ModelFileError
from ..core.mllp import MllpSpec
from ..core.model import MarginalModel
from ..core.table import TableSchema, build_schema
from ..fit.constraint import ModelConstraint
from ..fit.penalty import PenaltySpec

ALLOWED_KEYS = {
    None: {'schema', 'mllp', 'constraint', 'covariates', 'penalty',
           'options'},
    'schema': {'variables'},
    'variable': {'name', 'levels'},
    'mllp': {'margins', 'effects', 'coding'},
    'constraint': {'zero', 'K', 'X', 'general', 'labels'},
    'general': {'A', 'margins'},
    'covariates': {'formula', 'design'},
    'penalty': {'nu', 'penalize', 'overrides', 'adaptive', 'grid'},
    'grid': {'start', 'stop', 'num', 'log'},
    'options': {'algorithm', 'max_iter', 'tol_constraint', 'tol_score',
                'step_control', 'max_halvings', 'merit_weight', 'start',
                'observed_info_method', 'max_sweeps', 'sweep_tol',
                'outer_tol', 'gap_tol', 'seed', 'multi_start'},
}

FIT_OPTION_KEYS = {'algorithm', 'max_iter', 'tol_constraint', 'tol_score',
                   'step_control', 'max_halvings', 'merit_weight', 'start',
                   'observed_info_method'}
PENALTY_OPTION_KEYS = {'max_sweeps', 'sweep_tol', 'outer_tol', 'gap_tol'}


class ModelFile(HasTraits):
    """ A parsed model file.
    """

    path = Instance(Path)
    schema = Instance(TableSchema)
    model = Instance(MarginalModel)
    constraint = Instance(ModelConstraint, allow_none=True)

    # Covariate formula, mapping effect names to covariate names.
    formula = Dict(allow_none=True)

    # Per-unit design CSV, resolved against the model file.
    design_path = Instance(Path, allow_none=True)

    penalty = Instance(PenaltySpec, allow_none=True)

    # Option overrides, applied over the library configuration.
    options = Dict()

    @property
    def has_covariates(self):
        return self.formula is not None or self.design_path is not None

    @property
    def fit_options(self):
        return {k: v for k, v in self.options.items()
                if k in FIT_OPTION_KEYS}

    @property
    def penalty_options(self):
        return {k: v for k, v in self.options.items()
                if k in PENALTY_OPTION_KEYS}


def load_model_file(path):
    """ Read and validate a model file.
    """
    path = Path(str(path))
    text = path.read_text(encoding='utf-8')
    return ModelFileParser(text, path).parse()


class ModelFileParser(object):
    """ Parser turning a model file into model objects, reporting errors
    at the line of the offending token.
    """

    def __init__(self, text, path=None):
        self.text = text
        self.path = path
        self.filename = str(path) if path is not None else '<model>'

    def parse(self):
        try:
            document = json.loads(self.text,
                                  object_pairs_hook=self._unique_pairs)
        except ModelFileError:
            raise
        except ValueError as error:
            raise ModelFileError("Invalid JSON: %s" % getattr(
                error, 'msg', error), self.filename,
                getattr(error, 'lineno', None))
        if not isinstance(document, dict):
            self.fail("Model file must contain a JSON object")
        self.check_keys(document, None)
        for block in ('schema', 'mllp'):
            if block not in document:
                self.fail("Missing required block %r" % block)

        schema = self.parse_schema(document['schema'])
        try:
            model = MarginalModel.from_spec(
                schema, self.parse_mllp(document['mllp'], schema))
        except ModelFileError:
            raise
        except MarginfitError as error:
            self.fail(str(error), 'mllp')
        result = ModelFile(path=self.path or Path('.'), schema=schema,
                           model=model, formula=None)
        if 'constraint' in document:
            result.constraint = self.parse_constraint(
                document['constraint'], model)
        if 'covariates' in document:
            self.parse_covariates(document['covariates'], result)
        if 'penalty' in document:
            result.penalty = self.parse_penalty(document['penalty'])
        if 'options' in document:
            options = document['options']
            self.check_type(options, dict, 'options')
            self.check_keys(options, 'options')
            result.options = options
        return result

    # Blocks

    def parse_schema(self, block):
        self.check_type(block, dict, 'schema')
        self.check_keys(block, 'schema')
        variables = block.get('variables')
        if not isinstance(variables, list) or not variables:
            self.fail("Schema needs a nonempty list of variables",
                      'variables')
        names, dims = [], []
        for variable in variables:
            self.check_type(variable, dict, 'variables')
            self.check_keys(variable, 'variable')
            if 'name' not in variable or 'levels' not in variable:
                self.fail("Each variable needs a name and a number of "
                          "levels", 'variables')
            names.append(variable['name'])
            dims.append(variable['levels'])
        try:
            return build_schema(dims, names)
        except MarginfitError as error:
            self.fail(str(error), 'variables')

    def parse_mllp(self, block, schema):
        self.check_type(block, dict, 'mllp')
        self.check_keys(block, 'mllp')
        if 'margins' not in block:
            self.fail("The mllp block needs a list of margins", 'mllp')
        margins = [self.variables(margin, schema)
                   for margin in self.check_type(block['margins'], list,
                                                 'margins')]
        effects = None
        if 'effects' in block:
            effects = []
            for pair in self.check_type(block['effects'], list, 'effects'):
                if not (isinstance(pair, list) and len(pair) == 2 and
                        isinstance(pair[1], int)):
                    self.fail("Effects are [effect, margin position] pairs",
                              'effects')
                effects.append((self.variables(pair[0], schema), pair[1]))
        coding = block.get('coding', 'baseline')
        if coding not in ('baseline', 'effect'):
            self.fail("Unknown coding %r" % coding, coding)
        return MllpSpec.from_margins(margins, effects=effects, coding=coding)

    def parse_constraint(self, block, model):
        self.check_type(block, dict, 'constraint')
        self.check_keys(block, 'constraint')
        kinds = [k for k in ('zero', 'K', 'X', 'general') if k in block]
        if len(kinds) != 1:
            self.fail("The constraint block needs exactly one of zero, K, "
                      "X or general", 'constraint')
        kind = kinds[0]
        try:
            if kind == 'zero':
                names = self.check_type(block['zero'], list, 'zero')
                for name in names:
                    try:
                        model.effect_coordinates(name)
                    except MarginfitError as error:
                        self.fail(str(error), name)
                return ModelConstraint.zeroed(model, names)
            if kind == 'K':
                return ModelConstraint.linear(self.matrix(block['K'], 'K'))
            if kind == 'X':
                return ModelConstraint.design(self.matrix(block['X'], 'X'),
                                              block.get('labels'))
            general = self.check_type(block['general'], dict, 'general')
            self.check_keys(general, 'general')
            if 'A' not in general or 'margins' not in general:
                self.fail("General constraints need A and margins",
                          'general')
            margins = [self.variables(margin, model.schema)
                       for margin in general['margins']]
            return ModelConstraint.general(
                self.matrix(general['A'], 'A'), schema=model.schema,
                margins=margins)
        except ModelFileError:
            raise
        except MarginfitError as error:
            self.fail(str(error), kind)

    def parse_covariates(self, block, result):
        self.check_type(block, dict, 'covariates')
        self.check_keys(block, 'covariates')
        if ('formula' in block) == ('design' in block):
            self.fail("The covariates block needs exactly one of formula "
                      "or design", 'covariates')
        if 'formula' in block:
            formula = self.check_type(block['formula'], dict, 'formula')
            for effect, names in formula.items():
                try:
                    result.model.effect_coordinates(effect)
                except MarginfitError as error:
                    self.fail(str(error), effect)
                if not isinstance(names, list):
                    self.fail("Covariates of %r must be a list" % effect,
                              effect)
            result.formula = formula
        else:
            result.design_path = self.resolve(block['design'])

    def parse_penalty(self, block):
        self.check_type(block, dict, 'penalty')
        self.check_keys(block, 'penalty')
        grid = block.get('grid', [])
        if isinstance(grid, dict):
            self.check_keys(grid, 'grid')
            try:
                start, stop = float(grid['start']), float(grid['stop'])
                num = int(grid.get('num', 10))
            except (KeyError, TypeError, ValueError):
                self.fail("A grid needs numeric start and stop", 'grid')
            if grid.get('log', False):
                if start <= 0:
                    self.fail("A log-spaced grid needs a positive start",
                              'grid')
                grid = np.geomspace(start, stop, num)
            else:
                grid = np.linspace(start, stop, num)
        try:
            return PenaltySpec(
                nu=float(block.get('nu', 0.0)),
                penalize=list(block.get('penalize', [])),
                overrides={k: float(v) for k, v
                           in block.get('overrides', {}).items()},
                adaptive=bool(block.get('adaptive', False)),
                grid=[float(value) for value in grid])
        except (MarginfitError, TypeError, ValueError) as error:
            self.fail(str(error), 'penalty')

    # Helpers

    def variables(self, margin, schema):
        """ Positions of the variables of a margin or effect, given as a
        list of names or as a string such as "A:B".
        """
        if isinstance(margin, str):
            tokens = [token.strip() for token in margin.split(':')]
        elif isinstance(margin, list):
            tokens = margin
        else:
            self.fail("Margins are lists of variable names", 'margins')
        positions = []
        for token in tokens:
            if token not in schema.names:
                self.fail("Unknown variable %r (known: %s)"
                          % (token, ', '.join(schema.names)), token)
            positions.append(schema.names.index(token))
        return positions

    def matrix(self, value, name):
        """ A matrix given inline or as a CSV path.
        """
        if isinstance(value, str):
            path = self.resolve(value)
            try:
                return pd.read_csv(str(path), header=None).values.astype(
                    float)
            except (IOError, OSError, ValueError) as error:
                self.fail("Cannot read matrix %s from %s: %s"
                          % (name, path, error), value)
        try:
            matrix = np.array(value, dtype=float)
        except (TypeError, ValueError):
            self.fail("Matrix %s must be numeric" % name, name)
        if matrix.ndim not in (1, 2):
            self.fail("Matrix %s must be two-dimensional" % name, name)
        return matrix

    def resolve(self, relative):
        base = self.path.parent if self.path is not None else Path('.')
        return base.joinpath(relative)

    def check_keys(self, block, where):
        allowed = ALLOWED_KEYS[where]
        for key in block:
            if key not in allowed:
                self.fail("Unknown key %r%s" % (
                    key, " in block %r" % where if where else ""), key)

    def check_type(self, value, kind, where):
        if not isinstance(value, kind):
            self.fail("%r must be a %s" % (where, kind.__name__), where)
        return value

    def fail(self, message, token=None):
        raise ModelFileError(message, self.filename, self.line_of(token))

    def line_of(self, token):
        """ Line of the first occurrence of a quoted token, if any.
        """
        if token is None:
            return None
        token = re.escape(str(token))
        match = re.search(r'"%s"' % token, self.text) or \
            re.search(r'(?<![\w.])%s(?![\w.])' % token, self.text)
        if match is None:
            return None
        return self.text.count('\n', 0, match.start()) + 1

    def _unique_pairs(self, pairs):
        keys = [key for key, _ in pairs]
        for key in keys:
            if keys.count(key) > 1:
                self.fail("Duplicate key %r" % key, key)
        return dict(pairs)
