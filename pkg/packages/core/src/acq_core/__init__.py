"""acq-core: autodiff engine, layers, config and shared utilities for ACQ."""
