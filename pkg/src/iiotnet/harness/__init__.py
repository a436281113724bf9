"""Scenarios, the requirements catalog and the trace-based requirement checks."""
