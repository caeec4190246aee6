"""QDMR logical forms, token dependency graphs and their conversions."""
