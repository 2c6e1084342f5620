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

from pathlib2 import Path
import unittest

from numpy.testing import assert_allclose

from ...core.errors import ModelFileError
from ..model_file import ModelFileParser, load_model_file

data_path = Path(__file__).parent.joinpath('data')

SCHEMA = """{
  "schema": {
    "variables": [
      {"name": "A", "levels": 3},
      {"name": "B", "levels": 3}
    ]
  },
"""


def parse(body, path=None):
    return ModelFileParser(SCHEMA + body, path).parse()


class TestModelFile(unittest.TestCase):

    def test_minimal(self):
        """ Can we read a model with only a schema and margins?
        """
        spec = parse("""  "mllp": {"margins": [["A"], ["B"], ["A", "B"]]}
}""")
        self.assertEqual(spec.schema.names, ['A', 'B'])
        self.assertEqual(spec.model.t, 9)
        self.assertIsNone(spec.constraint)
        self.assertIsNone(spec.penalty)
        self.assertFalse(spec.has_covariates)

    def test_string_margins(self):
        """ Can margins and effects be written as strings?
        """
        spec = parse("""  "mllp": {
    "margins": ["A", "A:B"],
    "effects": [["A", 0], ["B", 1], ["A:B", 1]],
    "coding": "effect"
  }
}""")
        self.assertEqual(spec.model.spec.margins, [(0,), (0, 1)])
        self.assertEqual(spec.model.spec.coding, 'effect')

    def test_constraints(self):
        """ Are zero, K and general constraint blocks understood?
        """
        zero = parse("""  "mllp": {"margins": ["A", "B", "A:B"]},
  "constraint": {"zero": ["A:B"]}
}""")
        self.assertEqual(zero.constraint.r, 4)
        linear = parse("""  "mllp": {"margins": ["A", "B", "A:B"]},
  "constraint": {"K": "K_3x3.csv"}
}""", data_path.joinpath('model.json'))
        self.assertEqual(linear.constraint.kind, 'linear')
        assert_allclose(linear.constraint.K, zero.constraint.K)
        general = parse("""  "mllp": {"margins": ["A", "B", "A:B"]},
  "constraint": {"general": {"A": [[1, -1, 0, 0, 0, 0]],
                             "margins": ["A", "B"]}}
}""")
        self.assertEqual(general.constraint.kind, 'general')
        self.assertEqual(general.constraint.M.shape, (6, 9))

    def test_penalty_and_options(self):
        """ Are penalty and option blocks read, with log-spaced grids?
        """
        spec = parse("""  "mllp": {"margins": ["A", "B", "A:B"]},
  "penalty": {"nu": 2.0, "penalize": ["A:B"],
              "grid": {"start": 0.1, "stop": 10, "num": 3, "log": true}},
  "options": {"algorithm": "regression", "max_sweeps": 50, "seed": 4}
}""")
        self.assertEqual(spec.penalty.nu, 2.0)
        assert_allclose(spec.penalty.grid, [0.1, 1.0, 10.0])
        self.assertEqual(spec.fit_options, {'algorithm': 'regression'})
        self.assertEqual(spec.penalty_options, {'max_sweeps': 50})
        self.assertEqual(spec.options['seed'], 4)

    def test_covariates(self):
        """ Are covariate formulas and design paths read?
        """
        spec = parse("""  "mllp": {"margins": ["A", "B", "A:B"]},
  "covariates": {"formula": {"A:B": ["x"]}}
}""")
        self.assertEqual(spec.formula, {'A:B': ['x']})
        self.assertTrue(spec.has_covariates)
        spec = parse("""  "mllp": {"margins": ["A", "B", "A:B"]},
  "covariates": {"design": "design.csv"}
}""", data_path.joinpath('model.json'))
        self.assertEqual(spec.design_path, data_path.joinpath('design.csv'))

    def test_unknown_key(self):
        """ Is an unknown key reported at its line?
        """
        with self.assertRaises(ModelFileError) as context:
            parse("""  "mllp": {"margins": ["A", "B", "A:B"]},
  "constraints": {"zero": ["A:B"]}
}""", Path('model.json'))
        self.assertEqual(context.exception.lineno, 9)
        self.assertIn("model.json:9:", str(context.exception))
        self.assertIn("'constraints'", str(context.exception))

    def test_unknown_variable(self):
        """ Does a malformed margin name the offending token?
        """
        with self.assertRaises(ModelFileError) as context:
            parse("""  "mllp": {
    "margins": [["A"], ["Q"], ["A", "B"]]
  }
}""")
        self.assertIn("'Q'", str(context.exception))
        self.assertEqual(context.exception.lineno, 9)

    def test_incomplete(self):
        """ Does an incomplete parameterization cite completeness?
        """
        with self.assertRaises(ModelFileError) as context:
            parse("""  "mllp": {"margins": [["A"], ["B"]]}
}""")
        self.assertIn("complete", str(context.exception))

    def test_invalid_json(self):
        """ Is a JSON syntax error reported at its line?
        """
        with self.assertRaises(ModelFileError) as context:
            parse("""  "mllp": {"margins": [["A"], ["B"] ["A", "B"]]}
}""")
        self.assertEqual(context.exception.lineno, 8)

    def test_duplicate_key(self):
        """ Are duplicate keys refused?
        """
        with self.assertRaises(ModelFileError):
            parse("""  "mllp": {"margins": ["A", "B", "A:B"]},
  "mllp": {"margins": ["A", "B", "A:B"]}
}""")

    def test_ambiguous_constraint(self):
        """ Is a constraint block with two kinds refused?
        """
        with self.assertRaises(ModelFileError):
            parse("""  "mllp": {"margins": ["A", "B", "A:B"]},
  "constraint": {"zero": ["A:B"], "K": "K_3x3.csv"}
}""")

    def test_load(self):
        """ Can we load a model file from disk?
        """
        path = Path(__file__).parent.parent.parent.joinpath(
            'tests', 'data', 'independence_3x3.json')
        spec = load_model_file(path)
        self.assertEqual(spec.constraint.beta_labels,
                         ['A[2]', 'A[3]', 'B[2]', 'B[3]'])
        self.assertEqual(spec.path, path)


if __name__ == '__main__':
    unittest.main()
