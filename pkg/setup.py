from setuptools import setup

classifiers = [
    'Development Status :: 3 - Alpha',
    'License :: OSI Approved :: MIT License',
    'Intended Audience :: Science/Research',
    'Operating System :: OS Independent',
    'Topic :: Scientific/Engineering :: Mathematics',
    'Programming Language :: Python',
    'Programming Language :: Python :: 3.8'
]

setup(
    name="wlasdi",
    version="0.0.1",
    description="""Weak-form latent space dynamics identification for PDE-constrained optimization.""",
    long_description="""A Python package for training noise-robust latent reduced-order models of the 1-D Burgers equation and using them, with reduced direct and adjoint gradients, to recover initial-condition parameters.""",
    license="MIT License",
    keywords="reduced-order-model weak-form system-identification optimization",
    classifiers=classifiers,
    include_package_data = False,
    python_requires='>=3.8',
    install_requires = [
      'numpy',
      'scipy>=1.7',
      'pandas',
      'statsmodels',
      'scikit-learn',
      'bokeh>=2.3'
    ],
    py_modules=['settings', 'get_logger', 'data', 'burgers', 'pod',
                'dynamics', 'coefficients', 'latent', 'sensitivity',
                'optimizers', 'utils', 'run', 'final_state_viz'],
    zip_safe = False,
    entry_points = {
        'console_scripts': [
            'wlasdi = run:main'
            ]
        },
)
