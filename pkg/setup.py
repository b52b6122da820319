from setuptools import setup

with open('README.md', 'rt', encoding="utf8") as f:
    readme = f.read()

setup(
    name="revharm",
    version="0.1.0",
    install_requires=["numpy >= 1.20", "scipy >= 1.7", "numba >= 0.55", "pandas >= 1.3"],
    extras_require={'full': ['scikit-sparse']},
    author="The revharm authors",
    description="reversible harmonic maps between triangle meshes",
    long_description=readme,
    long_description_content_type="text/markdown",

    license="MIT",
    classifiers=[
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "License :: OSI Approved :: MIT License",
        "Topic :: Scientific/Engineering :: Mathematics"
    ],

    packages=["revharm"],
    package_data={
        "revharm": ["py.typed"]
    },
    entry_points={
        "console_scripts": ["revharm = revharm.cli:main"]
    },
    python_requires=">=3.8",
)
