"""
ddos_rag
Retrieval-augmented DDoS flow classification with small language models
"""
import setuptools

DOCLINES = __doc__.split("\n")

setuptools.setup(
    name='ddos_rag',
    author='The ddos_rag developers',
    description=DOCLINES[0],
    long_description="\n".join(DOCLINES[2:]),
    version="0.1.0",
    license='BSD-3-Clause',
    packages=setuptools.find_packages(),
    package_data={
        'ddos_rag': ["data/columns/*.json", "data/configs/*.json", "data/flows/*.csv"]
    },
    include_package_data=True,
    install_requires=["numpy", "pandas", "requests", "jsonschema"],
    tests_require=["pytest", "pytest-cov"],
    entry_points={
        "console_scripts": ["ddos-rag=ddos_rag.cli:main"]
    },
    zip_safe=False,
    python_requires=">=3.7",
)
