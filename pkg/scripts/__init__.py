"""Slowly converging gradient flows: reduction, critical points, integration and rate classification."""
