"""Link-level simulation of Gaussian signaling for low-probability-of-detection MIMO.

Two schemes are modelled: chaos-based C-MIMO decoded by a semi-blind
receiver, and noncoherent Gaussian signaling (NGS), which hides
differentially encoded DUC codewords behind shared Gaussian projections.
"""
__version__ = "0.1.0"
