from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="edgesched",
    version="0.1.0",
    description="edgesched is a CLI that schedules object-detection tasks across an edge cluster by image complexity",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=["edgesched", "edgesched.*"]),
    package_data={"edgesched": ["data/*.json"]},
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.10",
    keywords="edge computing object detection scheduling offloading",
    install_requires=[
        "tomlkit==0.13.3",
        "rich==14.0.0",
        "pydantic==2.11.7",
        "click==8.3.0",
        "numpy>=1.26",
        "scipy>=1.11",
        "opencv-python-headless>=4.8",
        "scikit-image>=0.22",
        "pandas>=2.1",
    ],
    extras_require={
        "dev": ["pytest>=8.0"],
    },
    entry_points={"console_scripts": ["edgesched = edgesched.cli:cli"]},
)
