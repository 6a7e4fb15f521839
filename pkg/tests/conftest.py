import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from khopfair.graph import AttributedGraph  # noqa: E402


@pytest.fixture
def path3():
    """0 - 1 - 2 with groups 0, 1, 0."""
    return AttributedGraph(n=3, edges=np.array([[0, 1], [1, 2]]), groups=np.array([0, 1, 0]))
