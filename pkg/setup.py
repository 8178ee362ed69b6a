from setuptools import find_packages, setup

with open("requirements.txt", encoding="utf-8") as f:
    requirements = [line.strip() for line in f if line.strip() and not line.startswith("#")]

setup(
    name="jonesexpand",
    version="0.3.0",
    description="Asymptotic expansion of colored Jones polynomials from q-difference operators",
    packages=find_packages(exclude=["tests"]),
    install_requires=requirements,
    python_requires=">=3.9",
    entry_points={"console_scripts": ["jonesexpand = jonesexpand.cli:main"]},
)
