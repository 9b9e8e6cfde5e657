import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pinned_string import _pykernels, kernels

try:
    from pinned_string import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def brute_cells(pts, eps, cell, outer):
    """Reference: test every cell of the bounding box."""
    d = pts.shape[1]
    lo = np.floor((pts.min(0) - eps) / cell).astype(int)
    hi = np.floor((pts.max(0) + eps) / cell).astype(int)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    ks = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    if outer:
        lo_c = ks[:, None, :] * cell
        gap = np.clip(lo_c - pts[None], 0, None) + np.clip(pts[None] - lo_c - cell, 0, None)
    else:
        gap = (ks[:, None, :] + 0.5) * cell - pts[None]
    hit = (np.einsum("ijk,ijk->ij", gap, gap) < eps * eps).any(1)
    return {tuple(k) for k in ks[hit]}


def decode(keys, d):
    bits = kernels.key_bits(d)
    off = 1 << (bits - 1)
    mask = (1 << bits) - 1
    return {tuple(int((k >> (bits * a)) & mask) - off for a in range(d)) for k in keys.tolist()}


@pytest.mark.parametrize("impl", [_pykernels, pytest.param(_ckernels, marks=needs_ext)])
@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("outer", [False, True])
def test_occupied_cells_brute_force(impl, d, outer):
    rng = np.random.default_rng(d)
    pts = rng.normal(size=(30, d))
    got = decode(kernels.occupied_cells(pts, 0.3, 0.1, outer, impl=impl), d)
    assert got == brute_cells(pts, 0.3, 0.1, outer)


@needs_ext
@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 40), st.integers(1, 4)), elements=st.floats(-3, 3)),
       st.floats(0.05, 0.8), st.booleans())
def test_backends_agree(pts, eps, outer):
    a = kernels.occupied_cells(pts, eps, eps / 2, outer, impl=_pykernels)
    b = kernels.occupied_cells(pts, eps, eps / 2, outer, impl=_ckernels)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("impl", [_pykernels, pytest.param(_ckernels, marks=needs_ext)])
def test_ou_advance(impl):
    rng = np.random.default_rng(0)
    m = rng.normal(size=(3, 50))
    decay, sd, z = rng.uniform(size=50), rng.uniform(size=50), rng.normal(size=(3, 50))
    expect = m * decay + sd * z
    kernels.ou_advance(m, decay, sd, z, impl=impl)
    np.testing.assert_array_equal(m, expect)


def test_ou_shape_check():
    with pytest.raises(ValueError):
        kernels.ou_advance(np.zeros((2, 4)), np.zeros(3), np.zeros(4), np.zeros((2, 4)), impl=_pykernels)


def test_key_overflow():
    with pytest.raises(OverflowError):
        kernels.occupied_cells(np.array([[1e12, 0.0]]), 0.1, 0.05)


def test_invalid_radius():
    with pytest.raises(ValueError):
        kernels.occupied_cells(np.zeros((1, 2)), 0.0, 0.1)


def test_dyadic_nesting():
    rng = np.random.default_rng(3)
    pts = np.cumsum(rng.normal(size=(500, 2)) * 0.05, axis=0)
    sizes = []
    for k in range(2, 8):
        e = 2.0**-k
        sizes.append(kernels.occupied_cells(pts, e, e / 2, outer=True).size * (e / 2) ** 2)
    assert all(b <= a for a, b in zip(sizes, sizes[1:]))


def test_polyline_distance():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    assert kernels.polyline_distance(pts, [0.5, 0.3]) == pytest.approx(0.3)
    assert kernels.polyline_distance(pts, [2.0, 0.5]) == pytest.approx(1.0)
    assert kernels.polyline_distance(pts[:1], [3.0, 4.0]) == pytest.approx(5.0)


def test_min_pair_distance():
    a = np.array([[0.0, 0.0], [5.0, 5.0]])
    b = np.array([[1.0, 0.0], [5.0, 5.5]])
    assert kernels.min_pair_distance(a, b) == pytest.approx(0.5)


def test_pure_fallback_selected_and_identical():
    code = (
        "import numpy as np, json\n"
        "from pinned_string import kernels, experiments as ex\n"
        "from pinned_string.analytic import ModelParams\n"
        "r = ex.levy_identity_check(ModelParams(0.0, 2, 2), replicas=8, seed=1, epsilons=[0.25, 0.125], n_steps=128)\n"
        "print(json.dumps([kernels.BACKEND, r.to_dict()['curve']]))\n"
    )
    env_pure = {"PINNED_STRING_PURE": "1"}
    outs = []
    for extra in ({}, env_pure):
        res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True,
                             env={**os.environ, **extra})
        outs.append(res.stdout.strip())
    (b0, c0), (b1, c1) = (json.loads(o) for o in outs)
    assert b1 == "python"
    assert c0 == c1
