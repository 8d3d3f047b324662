from __future__ import annotations

import pytest

from fleetchain.clock import FakeClock
from fleetchain.store import create_volume


@pytest.fixture
def fake_clock():
    return FakeClock(step=0.001)


@pytest.fixture
def volume(tmp_path, fake_clock):
    """3-brick, single-replica volume on a deterministic clock."""
    return create_volume(tmp_path / "vol", n_bricks=3, replica_count=1, clock=fake_clock)
