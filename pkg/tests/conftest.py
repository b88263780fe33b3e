import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_deformation_gradient(rng, d, min_det=0.2, scale=0.3):
    """Random F = I + G with det F above ``min_det``."""
    while True:
        F = np.eye(d) + scale * rng.standard_normal((d, d))
        if np.linalg.det(F) > min_det:
            return F


def random_rotation(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def central_diff(f, x, h=1e-6):
    """Central differences of scalar-or-array valued ``f`` with respect to every entry of ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    out = np.zeros(f0.shape + x.shape)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        out[(Ellipsis,) + idx] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * h)
    return out


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
