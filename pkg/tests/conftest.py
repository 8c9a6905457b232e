import sys

import numpy as np
import pytest
from hypothesis import settings

from partmap.partition import PartitionRules

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

RULE_CONFIGS = {
    "default": PartitionRules(),
    "coarse": PartitionRules(min_cu_side=8, max_mtt_stage=2, max_qt_depth=3),
    "wide": PartitionRules(max_bt_side=128, max_tt_side=32, max_qt_depth=2),
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for row in module.RESULTS:
        terminalreporter.write_line(module.format_result(*row))
