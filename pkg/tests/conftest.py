import sys
from pathlib import Path

import pytest

# make the oracle helpers importable from any test module
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session", autouse=True)
def warm_jit_kernels():
    # one-time kernel compilation happens before any test, so runtime budgets
    # measure rendering throughput rather than the compiler
    from quiltcast.render import ensure_kernels_ready

    ensure_kernels_ready()
