"""Helper modules for the notebooks."""
