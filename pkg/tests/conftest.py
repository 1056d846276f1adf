import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hierlasso.data import CAT, CONT, Column, Dataset, standardize

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def mixed_dataset(
    rng: np.random.Generator,
    n: int = 40,
    kinds: str = "ccx",
    levels: int | tuple[int, ...] = 3,
    family: str = "gaussian",
    y=None,
) -> Dataset:
    """Standardized data with one column per character of ``kinds`` (c: categorical, x: continuous)."""
    cols = []
    lv = [levels] * len(kinds) if isinstance(levels, int) else list(levels)
    for k, kind in enumerate(kinds):
        if kind == "c":
            vals = rng.integers(1, lv[k] + 1, n)
            vals[: lv[k]] = np.arange(1, lv[k] + 1)  # every level observed
            cols.append(Column(f"c{k}", CAT, vals, lv[k]))
        else:
            cols.append(Column(f"x{k}", CONT, rng.standard_normal(n)))
    if y is None:
        if family == "gaussian":
            y = rng.standard_normal(n)
        else:
            y = (rng.random(n) < 0.45).astype(float)
            y[:2] = [0.0, 1.0]
    ds, _ = standardize(Dataset(y, tuple(cols), family))
    return ds


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None or call.when != "call":
        return
    crit = mark.kwargs["criterion"]
    doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
    passed = call.excinfo is None
    prev = _ACCEPTANCE.get(crit)
    if prev is None:
        _ACCEPTANCE[crit] = ("PASS" if passed else "FAIL", doc)
    elif prev[0] == "PASS" and not passed:
        # a criterion fails as a whole; name the failing check
        _ACCEPTANCE[crit] = ("FAIL", doc)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        status, doc = _ACCEPTANCE[crit]
        terminalreporter.write_line(f"criterion {crit:2d}: {status}  {doc}")
