"""klift: lift block/grid tensor kernels to verified, simplified formulas."""

__version__ = "0.1.0"
