"""
Instruction-conditioned discrete graph diffusion for molecules.
"""

__version__ = "0.3.0"
