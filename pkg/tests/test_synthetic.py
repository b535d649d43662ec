import numpy as np

from lasi import data
from lasi.imageio import ManifestKind, load_manifest
from lasi.synthetic import make_2afc_task, make_jnd_task, preference


def test_bundled_images():
    assert data.astronaut().shape == (64, 64, 3)
    assert data.camera().shape == (64, 64, 1)


def test_preference():
    assert preference(0.02, 0.02) == 0.5
    assert preference(0.08, 0.02) > 0.9  # alt1 has less noise
    assert abs(preference(0.03, 0.05) + preference(0.05, 0.03) - 1) < 1e-15


def test_tasks_are_deterministic(tmp_path):
    a = load_manifest(make_2afc_task(tmp_path / "a", n_examples=4, seed=9, size=16))
    b = load_manifest(make_2afc_task(tmp_path / "b", n_examples=4, seed=9, size=16))
    assert a.kind is ManifestKind.TWO_AFC and len(a) == 4
    assert [r.p for r in a.records] == [r.p for r in b.records]
    assert all(np.isin(r.p, np.arange(6) / 5) for r in a.records)
    assert a.records[2].alt0.read_bytes() == b.records[2].alt0.read_bytes()
    j = load_manifest(make_jnd_task(tmp_path / "j", n_examples=3, seed=2, size=16))
    assert j.kind is ManifestKind.JND and len(j) == 3
