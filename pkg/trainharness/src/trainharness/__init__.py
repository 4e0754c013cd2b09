"""Reference neural training harness for the benchmark task files.

Consumes tokenized samples and the vocabulary manifest written by the
`cabench` CLI, trains small sequence models (decoder-only transformer or
LSTM) with optional adaptive computation time, and writes prediction files
in the scorer's wire format.
"""

__version__ = "0.1.0"
