"""Cross-backend agreement: the numba and numpy kernel paths must match
within floating-point rounding on identical inputs."""

import numpy as np
import pytest

from structcore import kernels
from structcore.map_ops import gaussian_kernel

pytestmark = pytest.mark.skipif(
    kernels.numba_impl is None, reason="numba backend unavailable"
)

NB = lambda: kernels.get_backend("numba")
NP = lambda: kernels.get_backend("numpy")


def test_knn_agreement(rng):
    q = rng.standard_normal((40, 12)).astype(np.float32)
    b = rng.standard_normal((120, 12)).astype(np.float32)
    for k in (1, 5, 120, 200):
        a = NB().knn_mean_sqdist(q, b, k)
        c = NP().knn_mean_sqdist(q, b, k)
        np.testing.assert_allclose(a, c, rtol=1e-10, atol=1e-10)


def test_kcenter_agreement(rng):
    pts = rng.standard_normal((60, 5))
    a = NB().kcenter_greedy(pts, 12)
    b = NP().kcenter_greedy(pts, 12)
    np.testing.assert_array_equal(a, b)


def test_upsample_agreement(rng):
    src = rng.standard_normal((9, 13))
    a = NB().bilinear_upsample(src, 40, 31)
    b = NP().bilinear_upsample(src, 40, 31)
    np.testing.assert_array_equal(a, b)  # identical op order -> bitwise


def test_blur_agreement(rng):
    img = rng.standard_normal((17, 23))
    kern = gaussian_kernel(2.5)
    a = NB().gaussian_blur(img, kern)
    b = NP().gaussian_blur(img, kern)
    np.testing.assert_array_equal(a, b)  # identical tap order -> bitwise


def test_blur_radius_exceeding_image(rng):
    img = rng.standard_normal((3, 4))
    kern = gaussian_kernel(4.0)  # radius 16 >> image
    a = NB().gaussian_blur(img, kern)
    b = NP().gaussian_blur(img, kern)
    np.testing.assert_array_equal(a, b)
    assert np.isfinite(a).all()


def test_matmul_agreement(rng):
    a32 = rng.standard_normal((30, 20)).astype(np.float32)
    b32 = rng.standard_normal((20, 10)).astype(np.float32)
    x = NB().matmul_f64acc(a32, b32)
    y = NP().matmul_f64acc(a32, b32)
    np.testing.assert_allclose(
        x.astype(np.float64), y.astype(np.float64), rtol=1e-6, atol=1e-7
    )


def test_routing_agreement(rng):
    p = rng.standard_normal((50, 8)).astype(np.float32)
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    protos = rng.standard_normal((6, 8)).astype(np.float32)
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    a = NB().routing_mean_min_sqdist(p, protos)
    b = NP().routing_mean_min_sqdist(p, protos)
    assert a == pytest.approx(b, rel=1e-10)


def test_env_flag_selects_numpy(tmp_path):
    import subprocess
    import sys

    code = "from structcore import kernels; print(kernels.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"PATH": "/usr/bin:/bin", "STRUCTCORE_NUMBA": "0"},
        capture_output=True,
        text=True,
    )
    assert out.stdout.strip() == "numpy"
