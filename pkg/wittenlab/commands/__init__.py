# Commands package
from .spectra import register as register_spectra
from .families import register as register_families
from .structure import register as register_structure

__all__ = ["register_spectra", "register_families", "register_structure"]
