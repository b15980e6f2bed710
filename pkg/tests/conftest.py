from pathlib import Path

import numpy as np
import pytest

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture
def golden_check():
    """Compare against a stored array, capturing it on first build."""

    def check(name: str, arr: np.ndarray, tol: float = 1e-5):
        GOLDEN_DIR.mkdir(exist_ok=True)
        path = GOLDEN_DIR / f"{name}.npy"
        arr = np.asarray(arr)
        if not path.exists():
            np.save(path, arr)
        want = np.load(path)
        np.testing.assert_allclose(arr, want, atol=tol, rtol=0)

    return check


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Worst relative disagreement on elements with |analytic| above floor."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    mask = np.abs(analytic) > floor
    if not mask.any():
        return 0.0
    return float((np.abs(analytic - numeric)[mask] / scale[mask]).max())
