import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

# conventional benchmark file names per family
BENCHMARK_FILES = {
    "etth1": "ETTh1.csv",
    "etth2": "ETTh2.csv",
    "ettm1": "ETTm1.csv",
    "ettm2": "ETTm2.csv",
    "weather": "weather.csv",
    "ecl": "ecl.csv",
    "traffic": "traffic.csv",
}


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def standin_dir(tmp_path_factory):
    """Benchmark stand-in CSVs (or real files when TRITS_DATA_DIR is set)."""
    from trits.synth import benchmark_standin, write_csv

    real = os.environ.get("TRITS_DATA_DIR")
    if real and Path(real).is_dir():
        return Path(real)
    root = tmp_path_factory.mktemp("standins")
    for family, filename in BENCHMARK_FILES.items():
        write_csv(benchmark_standin(family), root / filename)
    return root
