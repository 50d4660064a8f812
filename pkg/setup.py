"""
Setup configuration for the synthlabel package
"""

from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="synthlabel",
    version="0.1.0",
    description="Synthetic labeled object detection datasets from sprites and backgrounds",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=["synthlabel", "synthlabel.*"]),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Image Recognition",
    ],
    python_requires=">=3.8",
    install_requires=[
        "click>=8.0.0",
        "numpy>=1.20",
        "Pillow>=9.1.0",
        "scipy>=1.7",
        "PyYAML>=5.4",
        "tqdm>=4.60",
    ],
    extras_require={
        "dev": [
            "pytest>=6.0",
            "pytest-cov",
            "black",
            "flake8",
            "mypy",
        ],
    },
    entry_points={
        "console_scripts": [
            "synthlabel=synthlabel.cli:main",
        ],
    },
    keywords="synthetic dataset object detection yolo sprites chroma key labeling",
)
