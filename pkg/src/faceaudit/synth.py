"""Synthetic cohorts with controlled, recoverable bias structure.

Geometry: every identity gets a centroid on the unit hypersphere pulled
toward a shared hub direction, and its images scatter around that
centroid.  Hub pull controls how close impostors come (false accepts);
scatter controls how far genuine images drift apart (false rejects).
Both knobs respond to group membership and, optionally, to the
identity's own attribute values, so downstream audits have a known
answer to recover.

Per identity ``u`` with unit residual ``r_u`` and hub ``h``:

    centroid_u = normalize(r_u + beta_u * h)
    image      = normalize(centroid_u + s_u * g / sqrt(dim)),  g ~ N(0, I)

    beta_u = (1 - base_margin) - margin_shift[cell(u)]
             + sum over FAR effects of strength * xtilde(u, var)
    s_u    = noise_scale + noise_shift[cell(u)]
             + sum over FRR effects of strength * xtilde(u, var)

where ``xtilde`` rescales the identity's aggregated attribute value to
[-1, 1] over the variable's bounds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from faceaudit.cohort import (
    EmbeddingRecord,
    ImageAttributes,
    aggregate_rows,
    write_attributes,
    write_embeddings_binary,
)
from faceaudit.errors import DataError, SchemaError
from faceaudit.schema import AttributeSchema, default_schema, save_schema

_MIN_NOISE = 0.01
_MIN_PULL = 0.0


@dataclass(frozen=True)
class AttributeEffect:
    """A planted monotone link from one attribute to one error mode.

    Positive strength raises the targeted error rate as the attribute
    grows; strength is in hub-pull units for ``far`` and in scatter
    units for ``frr``.
    """

    variable: str
    target: str
    strength: float

    def __post_init__(self):
        if self.target not in ("far", "frr"):
            raise DataError(f"effect target must be 'far' or 'frr', got {self.target!r}")


@dataclass(frozen=True)
class SynthConfig:
    """Full recipe for one synthetic cohort.

    ``identities_per_group`` maps concrete level tuples over
    ``group_attributes`` to identity counts; omitted cells get none.
    ``group_margin_shift`` widens (positive) or narrows (negative) a
    cell's hub margin, lowering or raising its false-accept propensity;
    ``group_noise_shift`` does the same for image scatter and false
    rejects.
    """

    identities_per_group: dict[tuple[str, ...], int]
    group_attributes: tuple[str, ...] = ("gender", "ethnicity")
    images_per_identity: int = 4
    dim: int = 64
    base_margin: float = 0.30
    noise_scale: float = 1.20
    group_margin_shift: dict[tuple[str, ...], float] = field(default_factory=dict)
    group_noise_shift: dict[tuple[str, ...], float] = field(default_factory=dict)
    attribute_effects: tuple[AttributeEffect, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if not self.identities_per_group:
            raise DataError("identities_per_group must name at least one cell")
        if self.images_per_identity < 2:
            raise DataError("need at least two images per identity")
        if self.dim < 2:
            raise DataError("embedding dimension must be at least 2")
        if not 0.0 < self.base_margin < 1.0:
            raise DataError("base_margin must lie strictly inside (0, 1)")
        if self.noise_scale <= 0.0:
            raise DataError("noise_scale must be positive")
        for cell, count in self.identities_per_group.items():
            if len(cell) != len(self.group_attributes):
                raise DataError(f"cell {cell!r} does not match group_attributes")
            if count < 1:
                raise DataError(f"cell {cell!r} must hold at least one identity")

    def validate_schema(self, schema: AttributeSchema) -> None:
        for name in self.group_attributes:
            var = schema.variable(name)
            if var.kind not in ("categorical", "boolean"):
                raise SchemaError(f"group attribute {name!r} must be discrete")
        for cell in set(self.identities_per_group) | set(self.group_margin_shift) | set(
            self.group_noise_shift
        ):
            for name, level in zip(self.group_attributes, cell):
                if level not in schema.variable(name).discrete_levels():
                    raise SchemaError(f"{level!r} is not a level of {name!r}")
        for effect in self.attribute_effects:
            var = schema.variable(effect.variable)
            if var.kind == "categorical":
                raise SchemaError(
                    f"effect on {effect.variable!r}: categorical attributes enter "
                    "through group shifts, not scalar effects"
                )
            if effect.variable in self.group_attributes:
                raise SchemaError(f"effect on {effect.variable!r} clashes with grouping")


@dataclass(frozen=True)
class SynthResult:
    records: tuple[EmbeddingRecord, ...]
    attributes: tuple[ImageAttributes, ...]
    ground_truth: dict


def _rescaled(value: float, var) -> float:
    lo, hi = var.bounds()
    return (2.0 * value - lo - hi) / (hi - lo)


def _draw_trait(var, rng) -> float:
    if var.kind == "boolean":
        return 1.0 if rng.random() < 0.15 else 0.0
    if var.kind == "categorical":
        return float(rng.integers(len(var.levels)))
    lo, hi = var.bounds()
    return float(rng.uniform(lo, hi))


def _jitter(trait: float, var, rng) -> float:
    if not var.is_continuous:
        return trait
    lo, hi = var.bounds()
    return float(np.clip(trait + rng.normal(0.0, 0.03 * (hi - lo)), lo, hi))


def generate(config: SynthConfig, schema: AttributeSchema | None = None) -> SynthResult:
    """Draw the cohort; the same (config, schema) pair always returns
    identical records, attribute rows, and ground truth."""
    schema = schema or default_schema()
    config.validate_schema(schema)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    hub = np.ones(config.dim) / np.sqrt(config.dim)
    base_pull = 1.0 - config.base_margin

    records: list[EmbeddingRecord] = []
    attributes: list[ImageAttributes] = []
    identity_truth: dict[str, dict] = {}
    serial = 0
    for cell in sorted(config.identities_per_group):
        count = config.identities_per_group[cell]
        cell_levels = dict(zip(config.group_attributes, cell))
        for _ in range(count):
            identity_id = f"u{serial:05d}"
            serial += 1

            traits: dict[str, float] = {}
            for var in schema.variables:
                if var.name in cell_levels:
                    level = cell_levels[var.name]
                    if var.kind == "categorical":
                        traits[var.name] = float(var.levels.index(level))
                    else:
                        traits[var.name] = float(int(level))
                else:
                    traits[var.name] = _draw_trait(var, rng)

            rows = []
            for k in range(config.images_per_identity):
                values = {
                    var.name: _jitter(traits[var.name], var, rng)
                    for var in schema.variables
                }
                rows.append((f"{identity_id}_{k:02d}", values))
            aggregated, _ = aggregate_rows([values for _, values in rows], schema)

            pull = base_pull - config.group_margin_shift.get(cell, 0.0)
            noise = config.noise_scale + config.group_noise_shift.get(cell, 0.0)
            for effect in config.attribute_effects:
                shift = effect.strength * _rescaled(
                    aggregated[effect.variable], schema.variable(effect.variable)
                )
                if effect.target == "far":
                    pull += shift
                else:
                    noise += shift
            pull = max(pull, _MIN_PULL)
            noise = max(noise, _MIN_NOISE)

            residual = rng.standard_normal(config.dim)
            residual /= np.linalg.norm(residual)
            centroid = residual + pull * hub
            centroid /= np.linalg.norm(centroid)
            for image_id, values in rows:
                scatter = rng.standard_normal(config.dim) / np.sqrt(config.dim)
                vec = centroid + noise * scatter
                vec /= np.linalg.norm(vec)
                records.append(
                    EmbeddingRecord(image_id, identity_id, vec.astype(np.float32))
                )
                attributes.append(ImageAttributes(image_id=image_id, values=values))
            identity_truth[identity_id] = {
                "cell": list(cell),
                "pull": pull,
                "noise": noise,
                "attributes": {k: aggregated[k] for k in sorted(aggregated)},
            }

    ground_truth = {
        "group_attributes": list(config.group_attributes),
        "cells": {",".join(cell): n for cell, n in sorted(config.identities_per_group.items())},
        "base_margin": config.base_margin,
        "noise_scale": config.noise_scale,
        "margin_shift": {",".join(c): s for c, s in sorted(config.group_margin_shift.items())},
        "noise_shift": {",".join(c): s for c, s in sorted(config.group_noise_shift.items())},
        "effects": [
            {"variable": e.variable, "target": e.target, "strength": e.strength}
            for e in config.attribute_effects
        ],
        "seed": config.seed,
        "dim": config.dim,
        "images_per_identity": config.images_per_identity,
        "identities": identity_truth,
    }
    return SynthResult(
        records=tuple(records), attributes=tuple(attributes), ground_truth=ground_truth
    )


def config_to_dict(config: SynthConfig) -> dict:
    """JSON-friendly mirror of a SynthConfig; cells join levels with commas."""
    return {
        "identities_per_group": {
            ",".join(cell): n for cell, n in sorted(config.identities_per_group.items())
        },
        "group_attributes": list(config.group_attributes),
        "images_per_identity": config.images_per_identity,
        "dim": config.dim,
        "base_margin": config.base_margin,
        "noise_scale": config.noise_scale,
        "group_margin_shift": {
            ",".join(cell): s for cell, s in sorted(config.group_margin_shift.items())
        },
        "group_noise_shift": {
            ",".join(cell): s for cell, s in sorted(config.group_noise_shift.items())
        },
        "attribute_effects": [
            {"variable": e.variable, "target": e.target, "strength": e.strength}
            for e in config.attribute_effects
        ],
        "seed": config.seed,
    }


def config_from_dict(data: dict) -> SynthConfig:
    if "identities_per_group" not in data:
        raise DataError("synth config needs an identities_per_group mapping")
    known = {
        "identities_per_group",
        "group_attributes",
        "images_per_identity",
        "dim",
        "base_margin",
        "noise_scale",
        "group_margin_shift",
        "group_noise_shift",
        "attribute_effects",
        "seed",
    }
    unknown = set(data) - known
    if unknown:
        raise DataError(f"unknown synth config keys: {sorted(unknown)}")
    defaults = SynthConfig.__dataclass_fields__

    def cells(key):
        return {
            tuple(label.split(",")): value for label, value in data.get(key, {}).items()
        }

    effects = tuple(
        AttributeEffect(e["variable"], e["target"], float(e["strength"]))
        for e in data.get("attribute_effects", [])
    )
    return SynthConfig(
        identities_per_group={c: int(n) for c, n in cells("identities_per_group").items()},
        group_attributes=tuple(
            data.get("group_attributes", defaults["group_attributes"].default)
        ),
        images_per_identity=int(
            data.get("images_per_identity", defaults["images_per_identity"].default)
        ),
        dim=int(data.get("dim", defaults["dim"].default)),
        base_margin=float(data.get("base_margin", defaults["base_margin"].default)),
        noise_scale=float(data.get("noise_scale", defaults["noise_scale"].default)),
        group_margin_shift={c: float(s) for c, s in cells("group_margin_shift").items()},
        group_noise_shift={c: float(s) for c, s in cells("group_noise_shift").items()},
        attribute_effects=effects,
        seed=int(data.get("seed", 0)),
    )


def simpson_config(
    n_major: int = 160,
    n_minor: int = 20,
    seed: int = 0,
    dim: int = 64,
    in_cell_gap: float = 0.10,
    between_gap: float = 0.30,
) -> SynthConfig:
    """A cohort whose gender gap flips sign once ethnicity is held fixed.

    Within every ethnicity men have the narrower margin (higher false
    accepts), but men concentrate in the wide-margin ethnicity and women
    in the narrow-margin one, so the pooled comparison reverses: women
    come out worse overall.  Requires the default two grouping
    attributes with at least two levels each.
    """
    if n_major <= n_minor:
        raise DataError("n_major must exceed n_minor for the composition to flip")
    eth_margin = {"asian": -between_gap / 2, "black": 0.0, "caucasian": between_gap / 2}
    counts = {}
    shifts = {}
    for gender in ("man", "woman"):
        for eth, margin in eth_margin.items():
            cell = (gender, eth)
            # men narrow the margin inside each cell
            shifts[cell] = margin - (in_cell_gap if gender == "man" else 0.0)
            if gender == "man":
                counts[cell] = n_major if eth == "caucasian" else n_minor
            else:
                counts[cell] = n_major if eth == "asian" else n_minor
    return SynthConfig(
        identities_per_group=counts,
        group_margin_shift=shifts,
        seed=seed,
        dim=dim,
    )


def write_synth(outdir: str | Path, result: SynthResult, schema: AttributeSchema) -> dict[str, Path]:
    """Materialise a generated cohort as the on-disk exchange formats."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "embeddings": outdir / "embeddings.freb",
        "attributes": outdir / "attributes.csv",
        "schema": outdir / "schema.json",
        "ground_truth": outdir / "ground_truth.json",
    }
    write_embeddings_binary(paths["embeddings"], result.records)
    write_attributes(paths["attributes"], result.attributes, schema)
    save_schema(schema, paths["schema"])
    with open(paths["ground_truth"], "w", encoding="utf-8") as fh:
        json.dump(result.ground_truth, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return paths
