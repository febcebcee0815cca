from setuptools import find_packages, setup

if __name__ == "__main__":
    setup(
        name='mzi_phase',
        version='0.1.0',
        description='Bayesian phase estimation with optimized N-photon inputs in a Mach-Zehnder interferometer',
        license='Apache 2.0',
        packages=find_packages(),
        package_data={'mzi_phase': ['data/*.json', 'data/table1/*.json']},
        install_requires=['dataclasses-json', 'pandas>=1.5', 'numpy', 'scipy', 'tox', 'iterextras'],
        extras_require={'test': ['pytest', 'sympy']},
        entry_points={'console_scripts': ['mzi-phase=mzi_phase.cli:main']},
        zip_safe=False)
