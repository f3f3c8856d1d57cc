import numpy as np
import pytest

from microcircuit import canonical_config
from microcircuit.engine import SpikeRecord


@pytest.fixture(scope="session")
def canonical():
    return canonical_config()


def make_record(times, ids, n_neurons, labels=None, pop_slices=None,
                duration_ms=None, transient_ms=0.0, dt_ms=0.1):
    """Synthetic SpikeRecord for statistics tests."""
    times = np.asarray(times, dtype=float)
    ids = np.asarray(ids, dtype=np.int32)
    order = np.argsort(times, kind="stable")
    times, ids = times[order], ids[order]
    if labels is None:
        labels = ("P0",)
        pop_slices = ((0, n_neurons),)
    if duration_ms is None:
        duration_ms = float(times.max()) if times.size else 1000.0
    return SpikeRecord(times_ms=times, ids=ids, n_neurons=n_neurons,
                       labels=tuple(labels), pop_slices=tuple(pop_slices),
                       duration_ms=duration_ms, dt_ms=dt_ms,
                       transient_ms=transient_ms)
