"""Extractive sentence compression with a trigram language model, a 0-1
linear program, and a parallel DCA branch-and-bound solver."""

from .compressor import (CompressionRequest, CompressionResult, compress, fscore,
                         rate_to_bounds)
from .lm import Sentence, TrigramModel, train
from .parsetree import RuleSet, parse_bracketed
from .pdcabb import SolverOptions, solve

__all__ = ["CompressionRequest", "CompressionResult", "compress", "fscore", "rate_to_bounds",
           "Sentence", "TrigramModel", "train", "RuleSet", "parse_bracketed",
           "SolverOptions", "solve"]
__version__ = "0.1.0"
