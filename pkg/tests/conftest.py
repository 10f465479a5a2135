import time

import numpy as np
import pytest

from serodesign import ParameterBox, default_model, worst_case_design

ROW1_POINT = np.array([0.10, 0.30, 0.01])
ROW4_BOX = ParameterBox(lower=[0.01, 0.10, 0.00], upper=[0.15, 0.50, 0.02])


@pytest.fixture(scope="session")
def model_row1():
    return default_model()  # RTPCR at 1600


@pytest.fixture(scope="session")
def model_row2():
    return default_model(rtpcr_cost=1000.0)


@pytest.fixture(scope="session")
def model_row4():
    return default_model(rtpcr_cost=100.0)  # cheap RT-PCR; rows 3 and 4 of the fixtures


@pytest.fixture(scope="session")
def row4_worst_case(model_row4):
    """Worst-case solve over the table1_row4 fixture box; shared because it
    is the most expensive computation in the suite.  Returns (report, elapsed_s)."""
    start = time.perf_counter()
    report = worst_case_design(ROW4_BOX, model_row4, grid_step=0.01, budget=1e7)
    return report, time.perf_counter() - start
