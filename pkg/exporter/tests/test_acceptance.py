"""Exporter acceptance: the detector-side round trip, byte-identical reruns."""

import time

import numpy as np
import pytest
from PIL import Image

from embexport.export import ExportJob, export


def test_acceptance_round_trip(tmp_path):
    hallu_embfile = pytest.importorskip(
        "hallu.embfile", reason="round trip needs the detector package installed"
    )
    t0 = time.perf_counter()
    for name, count, size in (("cat", 5, 24), ("dog", 5, 30)):
        d = tmp_path / "imgs" / name
        d.mkdir(parents=True)
        for i in range(count):
            Image.new("RGB", (size + i, size), (i * 40 % 256, 80, 160)).save(
                d / f"{name}_{i}.png"
            )
    dirs = {"cat": tmp_path / "imgs" / "cat", "dog": tmp_path / "imgs" / "dog"}

    job = ExportJob(dirs, tmp_path / "animals", encoder="projection")
    result = export(job)
    assert result.rows == 10

    matrix = hallu_embfile.load_embedding_matrix(result.emb_path, result.manifest_path)
    assert matrix.n_rows == 10
    assert matrix.n_dims == result.dim
    assert np.all(np.isfinite(matrix.data))
    assert matrix.classes == ("cat", "dog")
    np.testing.assert_array_equal(matrix.labels, [0] * 5 + [1] * 5)

    export(ExportJob(dirs, tmp_path / "again", encoder="projection"))
    assert (tmp_path / "animals.emb1").read_bytes() == (tmp_path / "again.emb1").read_bytes()
    print(f"[PASS] exporter round trip (10 rows parsed by the detector, "
          f"byte-identical reruns) ({time.perf_counter() - t0:.2f}s)")
