import os
import subprocess
import sys

import numpy as np
import pytest

from aps_lab import _kernels

pytestmark = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


def _em_inputs(seed):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(0.2, 0.05, 20), rng.normal(0.7, 0.1, 15)])
    params = np.array([0.5, x.min(), x.var(), 0.5, x.max(), x.var()])
    return x, params


@pytest.mark.parametrize("seed", range(10))
def test_em_paths_agree(seed):
    x, params = _em_inputs(seed)
    t1, t2 = np.empty(101), np.empty(101)
    p1, n1 = _kernels.em_numpy(x, params, 100, 1e-6, 1e-8, t1)
    p2, n2 = _kernels.em_numba(x, params, 100, 1e-6, 1e-8, t2)
    assert n1 == n2
    np.testing.assert_allclose(p1, p2, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(t1[:n1], t2[:n2], rtol=1e-10)


def test_giou_paths_agree(rng):
    xy = rng.uniform(0, 100, (500, 2))
    pred = np.column_stack([xy, xy + rng.uniform(0.5, 80, (500, 2))])
    gt = np.array([20.0, 30.0, 90.0, 75.0])
    np.testing.assert_allclose(_kernels.giou_numpy(pred, gt), _kernels.giou_numba(pred, gt), rtol=0, atol=1e-14)


def test_env_flag_selects_numpy_path():
    code = "from aps_lab import _kernels as k; print(k.JIT_ENABLED, k.em is k.em_numpy)"
    env = dict(os.environ, APS_LAB_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]
    env["APS_LAB_DISABLE_JIT"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["True", "False"]
