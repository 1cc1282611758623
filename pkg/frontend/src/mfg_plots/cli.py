"""Command line: render one figure from a JSON job description.

    mfg-plot --job job.json

The job names the figure kind, the input CSV(s) written by the solver CLI,
style options, and the output image path. Paths inside the job resolve
relative to the job file, so a job directory moves around as a unit.
Exit codes: 0 success, 1 bad job description, 2 bad or empty input data,
3 I/O failure.
"""

import argparse
import json
import os
import sys

from . import figures
from .csvio import SchemaError


def _resolve(job, base):
    """Rebase well-formed path fields onto the job file's directory;
    anything malformed is left for validation to report."""
    if not isinstance(job, dict):
        return job
    out = dict(job)
    if isinstance(out.get("input"), str):
        out["input"] = os.path.join(base, out["input"])
    if isinstance(out.get("inputs"), list):
        ents = []
        for ent in out["inputs"]:
            if isinstance(ent, dict) and isinstance(ent.get("path"), str):
                ent = dict(ent, path=os.path.join(base, ent["path"]))
            ents.append(ent)
        out["inputs"] = ents
    if isinstance(out.get("out"), str):
        out["out"] = os.path.join(base, out["out"])
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mfg-plot", description="render one figure from solver CSVs")
    parser.add_argument("--job", required=True,
                        help="JSON figure-job description")
    args = parser.parse_args(argv)
    try:
        with open(args.job) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print("cannot read job %s: %s" % (args.job, exc), file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print("%s: %s" % (args.job, exc), file=sys.stderr)
        return 1
    job = _resolve(raw, os.path.dirname(os.path.abspath(args.job)))
    try:
        out = figures.render(job)
    except figures.JobError as exc:
        print("bad job: %s" % exc, file=sys.stderr)
        return 1
    except SchemaError as exc:
        print("bad data: %s" % exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print("i/o failure: %s" % exc, file=sys.stderr)
        return 3
    print("wrote %s" % out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
