"""Layered cortical microcircuit simulator with single-parameter rescaling.

The package splits into five layers, used in sequence:

- :mod:`microcircuit.params`  -- configuration loading and validation
- :mod:`microcircuit.rescale` -- the scale transform and compensation currents
- :mod:`microcircuit.build`   -- network materialization (exact synapse counts)
- :mod:`microcircuit.engine`  -- clock-driven LIF simulation
- :mod:`microcircuit.stats`   -- rate / irregularity / synchrony reports

`microcircuit.cli` wires them into one command-line tool.
"""

__version__ = "0.1.0"

from .params import (ModelConfig, ConfigError, canonical_config,
                     canonical_path, load_config, save_config)
from .rescale import (ScaleTransform, apply_transform, make_transform,
                      as_scale_factor, dc_compensation, analytic_mean_input_pa)
from .build import (NetworkInstance, build, exact_synapse_count,
                    synapse_count_matrix, dump_network, load_network_dump)
from .engine import (SpikeRecord, run, ExactPropagator, init_membrane,
                     poisson_drive, dc_drive_equivalent)
from .stats import (SamplingPlan, StatsReport, report, resolve_sampling,
                    mean_rate, cv_isi, synchrony)

__all__ = [
    "__version__",
    "ModelConfig", "ConfigError", "canonical_config", "canonical_path",
    "load_config", "save_config",
    "ScaleTransform", "apply_transform", "make_transform", "as_scale_factor",
    "dc_compensation", "analytic_mean_input_pa",
    "NetworkInstance", "build", "exact_synapse_count", "synapse_count_matrix",
    "dump_network", "load_network_dump",
    "SpikeRecord", "run", "ExactPropagator", "init_membrane", "poisson_drive",
    "dc_drive_equivalent",
    "SamplingPlan", "StatsReport", "report", "resolve_sampling", "mean_rate",
    "cv_isi", "synchrony",
]
