"""wareflow: location-aware multi-agent warehouse scheduling simulator,
scheduler baselines, a shared-parameter PPO learner, and an experiment
harness."""

__version__ = "0.1.0"
