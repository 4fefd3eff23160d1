"""Face-verification bias audit toolkit.

Pipeline: build or load a cohort of embeddings plus per-image attributes,
generate genuine/impostor verification trials, score them with cosine
similarity, calibrate decision thresholds (EER or fixed-FAR), compute
per-individual and per-group error rates, and explain error-rate variation
from image characteristics via correlation and multiple regression.
"""

__version__ = "0.1.0"

from faceaudit.errors import DataError, NumericalError

__all__ = ["DataError", "NumericalError", "__version__"]
