from setuptools import setup, find_packages


def read_requirements(path):
    with open(path, 'r') as f:
        return [line for line in f.read().splitlines()
                if line and not line.startswith('#') and not line.startswith('-r')]


setup(
    name='hierflow',
    version='1.0.0',
    description='Hierarchy and gravity model inference for directed weighted flow networks',
    package_dir={'': 'src'},  # tells setuptools to look in src
    packages=find_packages(where='src'),
    py_modules=['config'],
    package_data={'': ['config/*.json']},
    install_requires=read_requirements('requirements.txt'),
    extras_require={'test': read_requirements('requirements-test.txt')},
    entry_points={
        'console_scripts': [
            'hierflow=tools.hierflow_cli:cli',
        ],
    },
)
