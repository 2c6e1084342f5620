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

""" Reading count data and covariate data from CSV files.

Counts are accepted in two layouts:

* wide: the t cell counts on a single line, in lexicographic cell order
  with the last variable varying fastest;
* long: one column per variable (levels numbered from 1) and a `count`
  column; repeated cells are summed and absent cells count zero.

Covariate data are long, one row per cell of each unit, with a `stratum`
column naming the unit, the variable columns, an optional `count` column
(one per row when absent, for individual-level data) and covariate columns.
"""
from __future__ import absolute_import

from collections import OrderedDict

import numpy as np
import pandas as pd

from ..core.errors import SchemaError
from ..fit.covariates import StratifiedData, design_from_covariates


def read_counts(path, schema):
    """ Read a count vector for the given schema.
    """
    frame = pd.read_csv(str(path))
    if 'count' in frame.columns:
        return counts_from_long(frame, schema)
    values = pd.read_csv(str(path), header=None).values.ravel()
    try:
        values = values.astype(float)
    except ValueError:
        raise SchemaError("Wide count data must be numeric; name a 'count' "
                          "column for long data")
    if values.size != schema.t:
        raise SchemaError("Expected %d counts, found %d"
                          % (schema.t, values.size))
    return values


def counts_from_long(frame, schema):
    """ Tabulate a long data frame with variable and count columns.
    """
    missing = [name for name in schema.names if name not in frame.columns]
    if missing:
        raise SchemaError("Count data lack columns for variables: %s"
                          % ', '.join(missing))
    y = np.zeros(schema.t)
    levels = frame[schema.names].values.astype(int) - 1
    counts = frame['count'].values.astype(float)
    for cell, count in zip(levels, counts):
        y[schema.cell_index(cell)] += count
    return y


def read_stratified(path, model, formula=None, design_path=None):
    """ Read covariate data into per-unit responses and designs.

    Designs come either from a formula (see `design_from_covariates`),
    using covariate values that must be constant within each unit, or from
    a design CSV with columns `stratum`, `coordinate` (an eta label) and one
    column per regression coefficient.
    """
    schema = model.schema
    frame = pd.read_csv(str(path))
    if 'stratum' not in frame.columns:
        raise SchemaError("Covariate data need a 'stratum' column")
    if 'count' not in frame.columns:
        frame = frame.assign(count=1.0)
    groups = OrderedDict(
        (unit, group) for unit, group in frame.groupby('stratum', sort=False))
    responses = [counts_from_long(group, schema) for group in
                 groups.values()]

    if design_path is not None:
        designs, labels = read_designs(design_path, model, list(groups))
    elif not formula:
        raise SchemaError("Covariate data need a formula or a design file")
    else:
        names = [name for name in frame.columns if name not in
                 set(schema.names) | {'stratum', 'count'}]
        values = []
        for unit, group in groups.items():
            covariates = group[names].values.astype(float)
            if np.any(covariates != covariates[0]):
                raise SchemaError("Covariates vary within stratum %r" % unit)
            values.append(covariates[0])
        designs, labels = design_from_covariates(
            model, np.array(values), names, formula or {})
    return StratifiedData.from_units(zip(responses, designs),
                                     beta_labels=labels,
                                     unit_ids=list(groups))


def read_designs(path, model, units):
    """ Read per-unit design matrices from a CSV file.

    Interaction labels such as `A:B[2,2]` contain commas and must be quoted
    in the `coordinate` column.
    """
    frame = pd.read_csv(str(path))
    for column in ('stratum', 'coordinate'):
        if column not in frame.columns:
            raise SchemaError("Design data need a %r column" % column)
    labels = [c for c in frame.columns if c not in ('stratum', 'coordinate')]
    designs = []
    for unit in units:
        rows = frame[frame['stratum'] == unit]
        X = np.zeros((model.t-1, len(labels)))
        for _, row in rows.iterrows():
            if row['coordinate'] not in model.labels:
                raise SchemaError("Unknown coordinate %r in design of "
                                  "stratum %r" % (row['coordinate'], unit))
            X[model.labels.index(row['coordinate'])] = \
                row[labels].values.astype(float)
        designs.append(X)
    return designs, labels
