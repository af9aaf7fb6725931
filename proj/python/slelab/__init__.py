"""Python access to the chordal Loewner / two-sided SLE lab."""

import json

from ._core import (
    BranchError,
    ConfigError,
    DomainError,
    InvariantError,
    MapComposition,
    ParameterError,
    ZipperError,
    apply_slit,
    evolve,
    exit_time,
    extract_driving,
    kolmogorov_q,
    ks_two_sample,
    martingale_value,
    pair_driver,
    slit_jet,
    standard_sle_driver,
    trace,
    weighted_ks,
)
from ._core import run_suite as _run_suite

SUITES = ("martingale", "mstar", "identities", "coupling", "reversibility")


def config_text(**options):
    """Render keyword options as key = value lines; lists become repeated keys."""
    lines = []
    for key, value in options.items():
        values = value if isinstance(value, (list, tuple)) else [value]
        for v in values:
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


def run_suite(suite, config=None, **options):
    """Run a suite and return the parsed JSON report.

    `config` is key = value text in the CLI format; keyword options are
    applied after it (e.g. samples=200, pair=["halfdisk 0 0.3 ; halfdisk 1 0.3"]).
    """
    text = (config or "") + "\n" + config_text(**options)
    return json.loads(_run_suite(suite, text))


__all__ = [name for name in dir() if not name.startswith("_")]
