import pytest
import torch

from ganmut.datapipe import ManifestLoader, make_synthetic_dataset


@pytest.fixture(autouse=True, scope="session")
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def synthetic_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic")
    return make_synthetic_dataset(root, n_images=60, image_size=16, seed=0)


@pytest.fixture
def small_loader(synthetic_manifest):
    return ManifestLoader(synthetic_manifest, batch_size=8, image_size=16, seed=0)


# one summary line per acceptance criterion
_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.failed or (report.when == "call" and report.passed and number not in _CRITERIA):
        _CRITERIA[number] = (title, "FAIL" if report.failed else "PASS")
    elif report.skipped:
        _CRITERIA.setdefault(number, (title, "SKIP"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2} {status}  {title}")
