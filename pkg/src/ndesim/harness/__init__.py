"""Experiment manifests, runners, result tables and the command-line driver."""
