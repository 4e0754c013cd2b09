"""Fixtures: tiny datasets produced through the generator's own CLI,
so the harness is exercised strictly through the published file formats.
"""

import json
import subprocess
import sys
from pathlib import Path

import pytest

GEN_FLAGS = ["--w", "8", "--r", "1", "--t", "14", "--context", "5",
             "--n-train", "512", "--n-test", "128", "--seed", "7"]


def run_cabench(*argv: str) -> None:
    proc = subprocess.run(
        [sys.executable, "-m", "cabench.cli", *argv], capture_output=True, text=True
    )
    if proc.returncode != 0:
        raise RuntimeError(f"cabench {argv} failed:\n{proc.stderr}")


@pytest.fixture(scope="session")
def tiny_benchmark(tmp_path_factory) -> dict:
    """Small-width dataset plus os/oo task files and the vocab manifest."""
    root = tmp_path_factory.mktemp("bench")
    ds = root / "ds"
    run_cabench("gen-ca", *GEN_FLAGS, "--out", str(ds))
    paths = {"dataset": ds}
    for split, fname in (("train", "train.jsonl"), ("test", "test.jsonl")):
        for variant, k in (("os", 1), ("oo", 2), ("ros", 1)):
            out = root / f"{split}_{variant}_k{k}"
            run_cabench(
                "emit-tasks", "--dataset", str(ds / fname), "--variant", variant,
                "--k", str(k), "--context", "5", "--out", str(out),
            )
            paths[f"{split}_{variant}_k{k}"] = out / f"tasks_{variant}_k{k}.jsonl"
            paths["vocab_manifest"] = out / "run_manifest.json"
    return paths
