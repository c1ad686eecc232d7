import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from maskedreid.attributes import default_vocabulary

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def vocab():
    return default_vocabulary()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
