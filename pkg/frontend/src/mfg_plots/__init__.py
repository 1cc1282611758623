"""Figure rendering for the solver's CSV outputs.

This package talks to the solver only through files: it reads the public
CSV schemas and writes image files. Nothing here imports the solver.
"""

from .csvio import SchemaError, read_fields, read_huggett, read_turnpike
from .figures import KINDS, JobError, render
from .compare import compare_images

__all__ = ["KINDS", "JobError", "SchemaError", "render", "compare_images",
           "read_fields", "read_huggett", "read_turnpike"]
