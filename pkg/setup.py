"""Setup configuration for htprox"""
from setuptools import setup, find_packages
from pathlib import Path

# Read the README file for long description
this_directory = Path(__file__).parent
long_description = ""
readme_file = this_directory / "README.md"
if readme_file.exists():
    long_description = readme_file.read_text(encoding='utf-8')

setup(
    name='htprox',
    version='0.1.0',
    description='Gaussian and stable proximal samplers for heavy-tailed targets, with bound evaluators',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(include=['cli', 'cli.*', 'htprox', 'htprox.*']),
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Mathematics',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
    ],
    python_requires='>=3.10',
    install_requires=[
        'numpy>=1.24.0',
        'scipy>=1.10.0',
        'pydantic>=2.0.0',
        'tqdm>=4.65.0',
        'matplotlib>=3.7.0',
    ],
    extras_require={
        'dev': [
            'pytest>=7.4.0',
            'black>=23.0.0',
            'flake8>=6.1.0',
        ],
    },
    entry_points={
        'console_scripts': [
            'htprox=cli.main:main',
        ],
    },
    include_package_data=True,
    zip_safe=False,
    keywords='mcmc proximal-sampler alpha-stable heavy-tails sampling',
)
