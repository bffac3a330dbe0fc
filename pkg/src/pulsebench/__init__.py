"""Benchmark harness for imputing missing samples in pulsative waveforms."""
__version__ = "0.1.0"
