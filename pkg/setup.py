from setuptools import setup, find_packages

setup_args = {
    'name': 'marginfit',
    'version': '0.1',
    'description': 'Constrained and penalized fitting of marginal log-linear models',
    'license': 'ASL 2.0',
    'include_package_data': True,
    'packages': find_packages(),
    'package_data': {
        'marginfit': ['tests/data/*', 'io/tests/data/*'],
    },
    'zip_safe': False,
    'install_requires': [
        'pathlib2',
        'traitlets',
        'click<8.2',
        'networkx>=2.0',
        'cachetools',
        'numpy>=1.16',
        'scipy',
        'pandas',
    ],
    'entry_points': {
        'console_scripts': [
            'marginfit = marginfit.cli:cli',
        ],
    },
}

setup(**setup_args)
