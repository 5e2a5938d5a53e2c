"""Head-and-neck PET/CT radiomics and survival modelling."""

__version__ = "0.1.0"
