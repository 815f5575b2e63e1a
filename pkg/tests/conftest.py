import numpy as np
import pytest

from gpirt import GpirtConfig, SynthSpec, ThetaGrid, run_chain, synth_generate


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def coarse_grid():
    return ThetaGrid(-5.0, 5.0, 0.05)


@pytest.fixture(scope="session")
def small_data():
    spec = SynthSpec.preset("mixed", m=60, n=8, seed=4, n_quadratic=2)
    return synth_generate(spec)


@pytest.fixture(scope="session")
def small_config(coarse_grid):
    return GpirtConfig(grid=coarse_grid, n_iterations=40, burn_in=20, seed=9)


@pytest.fixture(scope="session")
def small_chain(small_data, small_config):
    data, _ = small_data
    return run_chain(data, small_config)


# -- acceptance reporting ---------------------------------------------------------
# Tests marked ``acceptance(number, title)`` get one PASS/FAIL line in the
# terminal summary, with whatever they stored in the ``evidence`` fixture.

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.fixture
def evidence(request):
    store = {}
    request.node._evidence = store
    return store


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    detail = ", ".join(f"{k}={_fmt(v)}" for k, v in getattr(item, "_evidence", {}).items())
    status = "PASS" if rep.passed else "FAIL"
    if _ACCEPTANCE.get(number, ("", "PASS"))[1] == "FAIL":
        status = "FAIL"
    _ACCEPTANCE[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}" + (f" ({detail})" if detail else ""))
