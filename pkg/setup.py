from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="squeeze-lab",
    version="0.1.0",
    description="Ponderomotive squeezing spectra and stability for dispersive plus dissipative optomechanics",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["examples", "examples.*"]),
    package_data={"squeeze_lab": ["data/*.cfg"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Physics",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.24.0",
        "scipy>=1.10.0",
        "pandas>=2.0.0",
        "pydantic>=2.4.2",
        "python-dotenv>=1.0.0",
        "jinja2>=3.1.2",
        "tenacity>=8.2.3",
    ],
    entry_points={
        "console_scripts": [
            "squeeze-lab=squeeze_lab.run:main",
        ],
    },
)
