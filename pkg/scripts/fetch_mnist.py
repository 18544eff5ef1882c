#!/usr/bin/env python3
"""Download the four MNIST IDX files into data/mnist.

The repo normally ships these files already; this script re-fetches them
from public mirrors if they are missing or damaged, then parses each one as
a sanity check.  Usage: python3 scripts/fetch_mnist.py [DEST_DIR]
"""

import sys
import urllib.request
from pathlib import Path

MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)

FILES = (
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
)


def fetch(name: str, dest: Path) -> None:
    last_err = None
    for mirror in MIRRORS:
        url = mirror + name
        try:
            print(f"  {url}")
            with urllib.request.urlopen(url, timeout=60) as resp:
                dest.write_bytes(resp.read())
            return
        except OSError as err:
            last_err = err
            print(f"    failed: {err}")
    raise SystemExit(f"could not download {name}: {last_err}")


def main() -> None:
    dest_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent / "data" / "mnist")
    dest_dir.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        path = dest_dir / name
        if path.exists():
            print(f"{name}: already present")
            continue
        print(f"{name}: downloading")
        fetch(name, path)

    sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))
    from tenreg.data_io import load_dataset

    for split, expect in (("train", 60000), ("t10k", 10000)):
        d = load_dataset(dest_dir, split)
        count = d.inputs.shape[0]
        status = "ok" if count == expect else f"EXPECTED {expect}"
        print(f"{split}: {count} images, {status}")
        if count != expect:
            raise SystemExit(1)


if __name__ == "__main__":
    main()
