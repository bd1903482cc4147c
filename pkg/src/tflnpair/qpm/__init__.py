"""Quasi-phase matching: modal dispersion, phase mismatch, spectra, tolerances and fits."""
