"""Word-embedding driven prediction of 40-band EQ curves from semantic descriptors."""

__version__ = "0.1.0"

NUM_BANDS = 40
EMBEDDING_DIM = 300
