"""Simulation, ingestion and detection pipeline for ASO worker device telemetry."""

__version__ = "0.1.0"
