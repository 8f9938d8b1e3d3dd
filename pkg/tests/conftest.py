import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from skillbank import _kernels  # noqa: E402

BACKENDS = [_kernels.python_backend] + ([_kernels.compiled_backend] if _kernels.compiled_backend else [])


@pytest.fixture(params=BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def kernels(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


# -- shared builders ---------------------------------------------------------

from skillbank.annotate import AlignedInterval, AnnotatedSlice  # noqa: E402
from skillbank.geometry import CameraModel, TrajectorySE3  # noqa: E402
from skillbank.skillparse import parse_signature  # noqa: E402

CAM = CameraModel(500.0, 500.0, 320.0, 240.0, 640, 480)


def make_slice(slice_id, signature, frame, positions=None, times=None, camera=CAM, description=""):
    if positions is None:
        positions = [(0.01 * i, 0.0, 1.0) for i in range(11)]
    positions = np.asarray(positions, dtype=float)
    if times is None:
        times = np.arange(len(positions)) / 10.0
    quats = np.tile([1.0, 0.0, 0.0, 0.0], (len(positions), 1))
    return AnnotatedSlice(
        slice_id=slice_id,
        video_id=slice_id.split("/")[0],
        signature=parse_signature(signature),
        description=description or signature,
        interval=AlignedInterval(0, 1, float(times[0]), float(times[-1])),
        trajectory=TrajectorySE3(times, positions, quats),
        camera=camera,
        initial_frame=Path(frame),
    )


@pytest.fixture
def frame_factory(tmp_path):
    def make(name, content=None):
        p = tmp_path / "frames" / f"{name}.png"
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(content if content is not None else name.encode())
        return p

    return make


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    from skillbank.synthetic import generate_corpus

    return generate_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def ingested(corpus):
    from skillbank.ingest import ingest_videos
    from skillbank.modelgw import Gateway
    from skillbank.plan import SkillLibrary
    from skillbank.skillparse import bundled_lexicon

    gw = Gateway.fixture(corpus.fixtures)
    repo, report = ingest_videos(list(corpus.manifests), SkillLibrary.load(corpus.library), gw, bundled_lexicon())
    return repo, report, gw


# -- acceptance report -------------------------------------------------------

ACCEPTANCE_LINES = {}


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line; printed in the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
