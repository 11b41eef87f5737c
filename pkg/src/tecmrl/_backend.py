"""Selects the compiled kernels when available, else the pure-Python ones.

Set ``TECMRL_PURE=1`` to force the fallback.
"""
import importlib
import os

import numpy as np

BACKENDS = ("cython", "python")


def load(name):
    if name == "cython":
        return importlib.import_module("tecmrl._kernels")
    if name == "python":
        return importlib.import_module("tecmrl._kernels_py")
    raise ValueError(f"unknown backend {name!r}")


def _select():
    if os.environ.get("TECMRL_PURE"):
        return "python", load("python")
    try:
        return "cython", load("cython")
    except ImportError:
        return "python", load("python")


BACKEND, kernels = _select()


def available():
    out = []
    for name in BACKENDS:
        try:
            load(name)
        except ImportError:
            continue
        out.append(name)
    return out


def as_index(values):
    return np.ascontiguousarray(values, dtype=np.int64)
