"""Regenerate the golden archive fixtures under tests/data/golden/.

The fixtures were produced once by an independent, widely used Kaldi
archive writer (kaldi_io by Karel Vesely) so the tests check our
reader/writer against bytes we did not produce ourselves.  Re-running
this script requires that module:

    pip install kaldi-io
    python3 scripts/make_golden_fixtures.py

The committed bytes are canonical; regenerate only if the fixture
contents themselves need to change.
"""

import pathlib

import kaldi_io
import numpy as np

HERE = pathlib.Path(__file__).resolve().parent.parent
GOLDEN = HERE / "tests" / "data" / "golden"


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    mat1 = np.array([[0.5, -1.25, 3.0], [2.5, 0.0, -0.75]], dtype=np.float32)
    mat2 = np.array(
        [[1.0, 2.0, 4.0], [-8.0, 16.0, -32.0], [0.125, -0.25, 64.0]],
        dtype=np.float32,
    )
    with open(GOLDEN / "matrices.ark", "wb") as fd:
        kaldi_io.write_mat(fd, mat1, key="golden_a")
        kaldi_io.write_mat(fd, mat2, key="golden_b")

    vec1 = np.array([0, 499, 3, 3, 17], dtype=np.int32)
    vec2 = np.array([42], dtype=np.int32)
    with open(GOLDEN / "ints.ark", "wb") as fd:
        kaldi_io.write_vec_int(fd, vec1, key="labels_a")
        kaldi_io.write_vec_int(fd, vec2, key="labels_b")
    print(f"wrote fixtures under {GOLDEN}")


if __name__ == "__main__":
    main()
