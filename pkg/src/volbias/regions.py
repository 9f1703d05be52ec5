"""Region-structured model of a binary segmentation task with label noise.

An image is abstracted into independent regions. Each region has a volume
and a probability of truly belonging to the foreground structure; a ground
truth is one joint Bernoulli draw over the regions. Background and certain
foreground are ordinary regions with probability 0 and 1, so every volume
and expectation below runs through a single code path.

The canonical benchmark scenario has one certain background region (volume
``s_alpha``, probability 0), ``k_regions`` equally sized uncertain regions
with common probability ``p_beta`` and total volume ``mu * s_gamma``, and
one certain foreground region (volume ``s_gamma``, probability 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .rng import make_rng

__all__ = [
    "Region",
    "RegionModel",
    "ScenarioSpec",
    "LabelConfiguration",
    "expand_scenario",
    "true_expected_volume",
    "sample_labeling",
    "configuration_volume",
]


@dataclass(frozen=True)
class Region:
    """One independent block of tissue: a volume and a foreground probability."""

    volume: float
    p_fg: float

    def __post_init__(self):
        if not np.isfinite(self.volume) or self.volume < 0:
            raise ValueError(f"region volume must be finite and >= 0, got {self.volume}")
        if not 0.0 <= self.p_fg <= 1.0:
            raise ValueError(f"foreground probability must lie in [0, 1], got {self.p_fg}")


@dataclass(frozen=True)
class RegionModel:
    """An ordered collection of independent regions plus the voxel volume.

    Volumes default to dimensionless units (voxel_volume = 1.0) so that
    results are reported relative to the certain-foreground volume.
    """

    regions: tuple[Region, ...]
    voxel_volume: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if len(self.regions) == 0:
            raise ValueError("a region model needs at least one region")
        if not np.isfinite(self.voxel_volume) or self.voxel_volume <= 0:
            raise ValueError(f"voxel volume must be finite and > 0, got {self.voxel_volume}")
        if not 0 < sum(r.volume for r in self.regions) < np.inf:
            raise ValueError("total volume must be positive and finite")

    @property
    def volumes(self) -> np.ndarray:
        return np.array([r.volume for r in self.regions])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([r.p_fg for r in self.regions])

    def __len__(self) -> int:
        return len(self.regions)


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of the canonical background / uncertain / foreground scenario.

    ``mu`` is the ratio of total uncertain volume to certain foreground
    volume; the uncertain volume is split evenly over ``k_regions``
    independent regions sharing the probability ``p_beta``.
    """

    s_alpha: float
    s_gamma: float
    mu: float
    k_regions: int
    p_beta: float

    def __post_init__(self):
        if self.s_alpha < 0 or self.s_gamma < 0 or self.mu < 0:
            raise ValueError("volumes and volume ratios must be >= 0")
        if int(self.k_regions) != self.k_regions or self.k_regions < 1:
            raise ValueError(f"k_regions must be a positive integer, got {self.k_regions}")
        if not 0.0 <= self.p_beta <= 1.0:
            raise ValueError(f"p_beta must lie in [0, 1], got {self.p_beta}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "s_alpha": self.s_alpha,
                "s_gamma": self.s_gamma,
                "mu": self.mu,
                "k_regions": int(self.k_regions),
                "p_beta": self.p_beta,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_dict(cls, obj: dict) -> "ScenarioSpec":
        keys = {"s_alpha", "s_gamma", "mu", "k_regions", "p_beta"}
        missing = keys - obj.keys()
        if missing:
            raise ValueError(f"scenario object is missing keys: {sorted(missing)}")
        return cls(
            s_alpha=float(obj["s_alpha"]),
            s_gamma=float(obj["s_gamma"]),
            mu=float(obj["mu"]),
            k_regions=int(obj["k_regions"]),
            p_beta=float(obj["p_beta"]),
        )


@dataclass(frozen=True)
class LabelConfiguration:
    """One realization of the per-region binary labels."""

    labels: tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(v) for v in self.labels)
        if any(v not in (0, 1) for v in labels):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "labels", labels)

    def as_array(self) -> np.ndarray:
        return np.array(self.labels, dtype=float)

    def __len__(self) -> int:
        return len(self.labels)


def expand_scenario(spec: ScenarioSpec) -> RegionModel:
    """Materialize a scenario as an explicit region model.

    Regions are ordered [background, uncertain_0 .. uncertain_{K-1},
    foreground]. Zero-volume regions are legal and contribute nothing.
    """
    beta_volume = spec.mu * spec.s_gamma / spec.k_regions
    regions = (
        [Region(spec.s_alpha, 0.0)]
        + [Region(beta_volume, spec.p_beta) for _ in range(spec.k_regions)]
        + [Region(spec.s_gamma, 1.0)]
    )
    return RegionModel(tuple(regions))


def true_expected_volume(model: RegionModel) -> float:
    """Expected foreground volume: sum of volume * probability over regions.

    By linearity of expectation this is exact, no enumeration needed.
    """
    return float(model.volumes @ model.probabilities)


def sample_labeling(model: RegionModel, rng_seed: int) -> LabelConfiguration:
    """Draw one joint labeling, each region independently Bernoulli(p_fg).

    Deterministic for a fixed seed. Certain regions (p in {0, 1}) always
    receive their certain label.
    """
    rng = make_rng(rng_seed)
    u = rng.random(len(model))
    return LabelConfiguration(tuple(int(x) for x in (u < model.probabilities)))


def configuration_volume(model: RegionModel, cfg: LabelConfiguration) -> float:
    """Foreground volume realized by one label configuration."""
    if len(cfg) != len(model):
        raise ValueError(f"configuration has {len(cfg)} labels for {len(model)} regions")
    return float(model.volumes @ cfg.as_array())
