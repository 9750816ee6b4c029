"""Random circuit sampling toolkit: simulation, noise models, fidelity estimators and diagnostics."""

__version__ = "0.1.0"
