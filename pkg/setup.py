from setuptools import setup

# Dependencies.
with open("requirements.txt") as f:
    tests_require = f.readlines()
install_requires = [t.strip() for t in tests_require]

with open("README.md") as f:
    long_description = f.read()

setup(
    name="dpci",
    version="0.1.0",
    description="Debiased confidence intervals for demand learned in contextual dynamic pricing",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="3-Clause BSD",
    packages=["dpci", "dpci.tests"],
    package_data={"dpci": ["configs/*.json"], "": ["requirements.txt"]},
    classifiers=[
        "License :: OSI Approved :: BSD License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3 :: Only",
        "Programming Language :: Python :: Implementation :: CPython",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.8",
    install_requires=install_requires,
    extras_require={"test": ["hypothesis", "pytest"]},
    entry_points={"console_scripts": ["dpci=dpci.cli:main"]},
    zip_safe=False,
)
