#!/usr/bin/env python3
"""Convert So2Sat LCZ42 HDF5 splits into the LCZP patch container.

The source files (training.h5 / validation.h5 / testing.h5) carry a float
dataset ``sen2`` of shape (N, 32, 32, 10) and a one-hot ``label`` of shape
(N, 17). Only those two datasets are read; Sentinel-1 channels are ignored.

usage: so2sat_to_lczp.py INPUT.h5 OUTPUT.lczp
       so2sat_to_lczp.py --selftest
"""

import struct
import sys
import tempfile

MAGIC = b"LCZP"
VERSION = 1
PATCH = 32
BANDS = 10
CHUNK = 4096


def convert(h5_path, out_path):
    import h5py
    import numpy as np

    with h5py.File(h5_path, "r") as h5, open(out_path, "wb") as out:
        sen2 = h5["sen2"]
        label = h5["label"]
        n = sen2.shape[0]
        if sen2.shape[1:] != (PATCH, PATCH, BANDS):
            raise SystemExit(f"sen2 has shape {sen2.shape}, expected (N, 32, 32, 10)")
        if label.shape != (n, 17):
            raise SystemExit(f"label has shape {label.shape}, expected ({n}, 17)")

        out.write(MAGIC)
        out.write(struct.pack("<HIIII", VERSION, n, PATCH, PATCH, BANDS))
        for start in range(0, n, CHUNK):
            stop = min(n, start + CHUNK)
            patches = np.asarray(sen2[start:stop], dtype="<f4")
            labels = np.argmax(np.asarray(label[start:stop]), axis=1).astype(np.uint8) + 1
            for i in range(stop - start):
                out.write(patches[i].tobytes())
                out.write(labels[i : i + 1].tobytes())
        print(f"wrote {n} patches to {out_path}")


def selftest():
    try:
        import h5py
        import numpy as np
    except ImportError:
        print("h5py/numpy not available; skipping importer selftest")
        sys.exit(77)

    rng = np.random.default_rng(0)
    n = 5
    sen2 = rng.normal(size=(n, PATCH, PATCH, BANDS)).astype(np.float32)
    onehot = np.zeros((n, 17), dtype=np.float32)
    for i in range(n):
        onehot[i, (3 * i) % 17] = 1.0

    with tempfile.TemporaryDirectory() as tmp:
        h5_path = f"{tmp}/mini.h5"
        out_path = f"{tmp}/mini.lczp"
        with h5py.File(h5_path, "w") as h5:
            h5.create_dataset("sen2", data=sen2)
            h5.create_dataset("label", data=onehot)
        convert(h5_path, out_path)

        with open(out_path, "rb") as f:
            assert f.read(4) == MAGIC
            version, count, h, w, c = struct.unpack("<HIIII", f.read(18))
            assert (version, count, h, w, c) == (VERSION, n, PATCH, PATCH, BANDS)
            for i in range(n):
                values = np.frombuffer(f.read(PATCH * PATCH * BANDS * 4), dtype="<f4")
                assert np.array_equal(values, sen2[i].reshape(-1))
                (lab,) = struct.unpack("B", f.read(1))
                assert lab == (3 * i) % 17 + 1
            assert f.read() == b""
    print("importer selftest passed")


def main(argv):
    if len(argv) == 2 and argv[1] == "--selftest":
        selftest()
        return
    if len(argv) != 3:
        raise SystemExit(__doc__)
    convert(argv[1], argv[2])


if __name__ == "__main__":
    main(sys.argv)
