"""Evaluation kernels with a numba fast path and a pure-numpy twin.

The hot loops of basis construction are monomial value/gradient tables and
weighted Gram accumulation.  Both implementations are kept importable so they
can be benchmarked against each other (see ``hholps.bench``); the active one
is chosen once at import time from the environment variable ``HHOLPS_BACKEND``:

* ``numpy``  force the pure-numpy kernels
* ``numba``  force the jitted kernels (ImportError if numba is missing)
* ``auto``   (default) use numba when it imports cleanly
"""

from __future__ import annotations

import os

import numpy as np


def _monomial_values_numpy(xi, eta, expo):
    return (xi[:, None] ** expo[None, :, 0]) * (eta[:, None] ** expo[None, :, 1])


def _monomial_gradients_numpy(xi, eta, expo):
    ex = expo[:, 0]
    ey = expo[:, 1]
    # max(e-1, 0) keeps 0**0 = 1 in play; the e factor zeroes the term anyway
    exm = np.maximum(ex - 1, 0)
    eym = np.maximum(ey - 1, 0)
    out = np.empty((xi.shape[0], expo.shape[0], 2))
    out[:, :, 0] = ex * (xi[:, None] ** exm[None, :]) * (eta[:, None] ** ey[None, :])
    out[:, :, 1] = ey * (xi[:, None] ** ex[None, :]) * (eta[:, None] ** eym[None, :])
    return out


def _weighted_gram_numpy(vals_a, vals_b, weights):
    return vals_a.T @ (weights[:, None] * vals_b)


_numba_values = None
_numba_gradients = None
_numba_gram = None


def _build_numba_kernels():
    global _numba_values, _numba_gradients, _numba_gram
    from numba import njit

    @njit(cache=True)
    def monomial_values(xi, eta, expo):
        npts = xi.shape[0]
        n = expo.shape[0]
        out = np.empty((npts, n))
        for j in range(n):
            ex = expo[j, 0]
            ey = expo[j, 1]
            for p in range(npts):
                out[p, j] = xi[p] ** ex * eta[p] ** ey
        return out

    @njit(cache=True)
    def monomial_gradients(xi, eta, expo):
        npts = xi.shape[0]
        n = expo.shape[0]
        out = np.zeros((npts, n, 2))
        for j in range(n):
            ex = expo[j, 0]
            ey = expo[j, 1]
            for p in range(npts):
                if ex > 0:
                    out[p, j, 0] = ex * xi[p] ** (ex - 1) * eta[p] ** ey
                if ey > 0:
                    out[p, j, 1] = ey * xi[p] ** ex * eta[p] ** (ey - 1)
        return out

    @njit(cache=True)
    def weighted_gram(vals_a, vals_b, weights):
        npts, na = vals_a.shape
        nb = vals_b.shape[1]
        out = np.zeros((na, nb))
        for p in range(npts):
            w = weights[p]
            for i in range(na):
                wa = w * vals_a[p, i]
                for j in range(nb):
                    out[i, j] += wa * vals_b[p, j]
        return out

    _numba_values = monomial_values
    _numba_gradients = monomial_gradients
    _numba_gram = weighted_gram


def _select_backend() -> str:
    choice = os.environ.get("HHOLPS_BACKEND", "auto").strip().lower()
    if choice not in {"auto", "numba", "numpy"}:
        raise ValueError(
            f"HHOLPS_BACKEND={choice!r} is not one of 'auto', 'numba', 'numpy'"
        )
    if choice == "numpy":
        return "numpy"
    try:
        _build_numba_kernels()
        return "numba"
    except ImportError:
        if choice == "numba":
            raise ImportError(
                "HHOLPS_BACKEND=numba but numba is not installed"
            ) from None
        return "numpy"


BACKEND = _select_backend()


def _as_kernel_args(xi, eta, expo):
    xi = np.ascontiguousarray(xi, dtype=np.float64)
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    expo = np.ascontiguousarray(expo, dtype=np.int64)
    return xi, eta, expo


def monomial_values(xi, eta, exponents):
    """Table of xi**a * eta**b, shape (npoints, nfunctions)."""
    xi, eta, expo = _as_kernel_args(xi, eta, exponents)
    if BACKEND == "numba":
        return _numba_values(xi, eta, expo)
    return _monomial_values_numpy(xi, eta, expo)


def monomial_gradients(xi, eta, exponents):
    """Table of (d/dxi, d/deta) of the monomials, shape (npoints, nfunctions, 2)."""
    xi, eta, expo = _as_kernel_args(xi, eta, exponents)
    if BACKEND == "numba":
        return _numba_gradients(xi, eta, expo)
    return _monomial_gradients_numpy(xi, eta, expo)


def weighted_gram(vals_a, vals_b, weights):
    """Quadrature inner products vals_a.T @ diag(weights) @ vals_b."""
    vals_a = np.ascontiguousarray(vals_a, dtype=np.float64)
    vals_b = np.ascontiguousarray(vals_b, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if BACKEND == "numba":
        return _numba_gram(vals_a, vals_b, weights)
    return _weighted_gram_numpy(vals_a, vals_b, weights)


def implementations():
    """Both kernel sets keyed by backend name, for benchmarking and tests."""
    impls = {
        "numpy": {
            "monomial_values": _monomial_values_numpy,
            "monomial_gradients": _monomial_gradients_numpy,
            "weighted_gram": _weighted_gram_numpy,
        }
    }
    try:
        if _numba_values is None:
            _build_numba_kernels()
        impls["numba"] = {
            "monomial_values": _numba_values,
            "monomial_gradients": _numba_gradients,
            "weighted_gram": _numba_gram,
        }
    except ImportError:
        pass
    return impls
