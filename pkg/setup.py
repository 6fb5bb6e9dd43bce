from setuptools import setup, find_packages

setup(
    name='TapasGMM',
    version='0.1',
    packages=find_packages(include=['modules', 'modules.*', 'utils', 'utils.*']),
    py_modules=['tapas'],
    install_requires=[
        'numpy',
        'scipy',
        'pandas',
        'param',
        'holoviews',
        'hvplot',
        'bokeh',
        'sphinx',
        'sphinx-rtd-theme',
        'sphinx-autodoc-typehints',
        "tomli; python_version < '3.11'",
    ],
)
