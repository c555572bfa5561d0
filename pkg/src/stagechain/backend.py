"""Selects the affine step kernel: compiled extension or numpy.

The compiled kernel is a Cython translation of
_kernel_numpy.centered_affine_steps. Selection happens once at import:
the extension is used when it built successfully, unless
STAGECHAIN_PURE_PYTHON=1 forces the numpy path. Both kernels implement
the same update rule; they differ only in summation order at the
floating-point level.
"""

from __future__ import annotations

import os

from . import _kernel_numpy


def _load_compiled():
    if os.environ.get("STAGECHAIN_PURE_PYTHON", "") == "1":
        return None
    try:
        from . import _kernel_cy
    except ImportError:
        return None
    return _kernel_cy.centered_affine_steps


_compiled_steps = _load_compiled()


def backend_name() -> str:
    return "compiled" if _compiled_steps is not None else "numpy"


def affine_step_fn():
    if _compiled_steps is not None:
        return _compiled_steps
    return _kernel_numpy.centered_affine_steps


def run_affine_schedule(wf, cf, wg, cg, moments, segments, lr, lam_cycle, lam_dist):
    return _kernel_numpy.run_affine_schedule(
        wf, cf, wg, cg, moments, segments, lr, lam_cycle, lam_dist,
        step_fn=affine_step_fn())
