from setuptools import setup, find_packages


setup(
    name = 'tsp-fcn',
    version = '0.1.0',
    description = 'Image-to-image TSP solving with a from-scratch fully convolutional network',
    long_description = 'Renders TSP instances as images, learns the optimal tour as a segmentation mask with a numpy FCN, and decodes masks back into tours by path pixel density. Ships exact and heuristic solvers for labels and benchmarks.',
    keywords = ' tsp traveling salesman fcn segmentation numpy arrow dynamic programming genetic ant colony',
    license = 'MIT',
    packages = find_packages(exclude=['tests']),
    install_requires = [
        'numpy>=1.20',
        'pyarrow>=7.0',
        'pillow>=8.0',
        'matplotlib>=3.3',
    ],
    extras_require = {
        'test': ['pytest'],
    },
    entry_points = {
        'console_scripts': ['tspfcn=tsp_fcn.cli:main'],
    },
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
    ],
    include_package_data = False,
    zip_safe = False
)
