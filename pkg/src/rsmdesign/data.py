"""Bundled example designs and configurations."""
from __future__ import annotations

import math
from importlib import resources
from pathlib import Path

from .model import Design, ModelSpec, central_composite, read_design
from .region import Region

EXAMPLE1_DESIGNS = (4, 5, 6, 7, 8)
EXAMPLE2_DESIGNS = (1, 2, 3, 4, 5, 7, 8, 9, 10)
# the five-factor example's central composite design carries this label
EXAMPLE2_CCD = 6


def fixture_path(name: str) -> Path:
    path = Path(str(resources.files("rsmdesign") / "fixtures" / name))
    if not path.exists():
        raise FileNotFoundError(f"no bundled fixture named {name!r}")
    return path


def example1_region() -> Region:
    return Region.cube(3)


def example2_region() -> Region:
    return Region.sphere(5, math.sqrt(5))


def example1_designs() -> dict[int, Design]:
    """Three-factor cube designs, n=26, keyed by design number."""
    return {k: read_design(fixture_path(f"example1_design{k}.csv"), name=f"design{k}") for k in EXAMPLE1_DESIGNS}


def example2_designs(include_ccd: bool = True) -> dict[int, Design]:
    """Five-factor sphere designs, n=30, coordinates snapped to the candidate grid.

    Design 6 is the half-fraction CCD with four centre points.
    """
    region = example2_region()
    out = {
        k: read_design(fixture_path(f"example2_design{k}.csv"), region=region, name=f"design{k}")
        for k in EXAMPLE2_DESIGNS
    }
    if include_ccd:
        ccd = central_composite(5, 4, rho=region.rho)
        out[EXAMPLE2_CCD] = Design(ccd.points, name=f"design{EXAMPLE2_CCD}")
    return dict(sorted(out.items()))


def example1_model() -> ModelSpec:
    return ModelSpec.full_quadratic(3)


def example2_model() -> ModelSpec:
    return ModelSpec.full_quadratic(5)
