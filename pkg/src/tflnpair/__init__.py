"""Design and analysis tools for a periodically poled thin-film lithium niobate pair source.

Sub-modules: ``materials`` (Sellmeier models), ``waveguide`` (rib geometry
and index maps), ``modesolver`` (finite-difference quasi-TE modes), ``qpm``
(phase matching, spectra, tolerances, sinc fits), ``photonstats``
(coincidence-count analysis) and ``cli``.
"""
__version__ = "0.1.0"
