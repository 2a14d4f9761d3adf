"""Robust investment-reinsurance equilibria for competing ambiguity-averse insurers."""
