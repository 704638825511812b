"""Experiment harness: synthetic sweeps, norm-bound checks and a train pipeline."""
