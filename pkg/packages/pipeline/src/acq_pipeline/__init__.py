"""ACQ pipeline: processors, phases and the acq-pipeline CLI."""
