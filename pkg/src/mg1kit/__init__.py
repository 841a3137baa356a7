"""Matrix-analytic toolkit for M/G/1-type Markov chains."""

__version__ = "0.1.0"
