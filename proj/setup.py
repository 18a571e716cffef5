import os

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

eigen_include = os.environ.get("EIGEN3_INCLUDE_DIR", "/usr/include/eigen3")

ext = Pybind11Extension(
    "geodot._core",
    sources=[
        "src/kernel.cpp",
        "src/geodesic.cpp",
        "src/optimality.cpp",
        "src/transport.cpp",
        "src/pipeline.cpp",
        "python/bindings.cpp",
    ],
    include_dirs=["include", "vendor", eigen_include],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
