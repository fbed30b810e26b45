"""Synthetic domain-shift generator.

Source instances are gaussian clusters around per-category means; target
instances pass through a fixed invertible affine map (rotation plus offset)
with optional observation noise. Class frequencies follow a Zipf law so
rare categories stress the in-batch pairing baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import ConfigError
from .retrieval import BBox

SOURCE = "source"
TARGET = "target"


def zipf_frequencies(num_categories: int, exponent: float) -> np.ndarray:
    """Normalized Zipf weights over category ranks 1..C (rank 1 commonest)."""
    if exponent < 0.0:
        raise ConfigError("zipf_exponent: must be >= 0")
    weights = np.arange(1, num_categories + 1, dtype=np.float64) ** -exponent
    return weights / weights.sum()


def rotation_in_random_planes(
    dim: int, angle_rad: float, rng: np.random.Generator
) -> np.ndarray:
    """Orthogonal map rotating by the given angle in dim//2 random planes.

    A zero angle returns the exact identity so a degenerate scenario leaves
    target inputs bit-identical to source inputs.
    """
    if angle_rad == 0.0:
        return np.eye(dim)
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    block = np.eye(dim)
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    for k in range(dim // 2):
        i, j = 2 * k, 2 * k + 1
        block[i, i] = c
        block[i, j] = -s
        block[j, i] = s
        block[j, j] = c
    return basis @ block @ basis.T


@dataclass
class SyntheticWorld:
    """Fixed generative description of one source/target scenario.

    Each category scatters into a few sub-cluster modes around its mean
    (the within-category appearance variation that makes most-similar
    retrieval matter); instances sample a mode, then gaussian spread.
    """

    num_categories: int
    input_dim: int
    class_means: np.ndarray
    mode_centers: np.ndarray  # (C, modes, input_dim)
    class_spread: np.ndarray
    shift_matrix: np.ndarray
    shift_offset: np.ndarray
    target_noise: float
    class_frequencies: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        c, d = self.num_categories, self.input_dim
        if self.class_means.shape != (c, d):
            raise ConfigError(f"class_means: shape {self.class_means.shape} != ({c}, {d})")
        if (
            self.mode_centers.ndim != 3
            or self.mode_centers.shape[0] != c
            or self.mode_centers.shape[2] != d
            or self.mode_centers.shape[1] < 1
        ):
            raise ConfigError("mode_centers: need shape (C, modes >= 1, input_dim)")
        if self.class_spread.shape != (c,):
            raise ConfigError("class_spread: one scale per category required")
        if np.any(self.class_spread < 0.0):
            raise ConfigError("class_spread: must be >= 0")
        if self.shift_matrix.shape != (d, d):
            raise ConfigError("shift_matrix: must be square of input_dim")
        if self.class_frequencies.shape != (c,):
            raise ConfigError("class_frequencies: one weight per category required")
        if abs(float(self.class_frequencies.sum()) - 1.0) > 1e-12:
            raise ConfigError("class_frequencies: must sum to 1")
        if np.any(self.class_frequencies < 0.0):
            raise ConfigError("class_frequencies: must be >= 0")
        if self.target_noise < 0.0:
            raise ConfigError("target_noise: must be >= 0")
        cond = float(np.linalg.cond(self.shift_matrix))
        if not cond < 1e6:
            raise ConfigError(f"shift_matrix: condition number {cond:.3g} >= 1e6")

    @property
    def modes_per_category(self) -> int:
        return self.mode_centers.shape[1]

    @classmethod
    def build(
        cls,
        rng: np.random.Generator,
        seed: int,
        num_categories: int = 20,
        input_dim: int = 32,
        class_separation: float = 4.0,
        class_spread: float = 0.25,
        modes_per_category: int = 3,
        mode_scatter: float = 1.5,
        zipf_exponent: float = 1.2,
        rotation_angle_deg: float = 35.0,
        shift_offset_scale: float = 1.0,
        target_noise: float = 0.1,
    ) -> "SyntheticWorld":
        """Sample a scenario: spherical class means with scattered modes,
        random-plane rotation, random offset direction, Zipf class skew."""
        if num_categories < 2:
            raise ConfigError(f"categories: need >= 2, got {num_categories}")
        if modes_per_category < 1:
            raise ConfigError("modes_per_category: need >= 1")
        if mode_scatter < 0.0:
            raise ConfigError("mode_scatter: need >= 0")
        means = rng.standard_normal((num_categories, input_dim))
        means *= class_separation / np.linalg.norm(means, axis=1, keepdims=True)

        directions = rng.standard_normal((num_categories, modes_per_category, input_dim))
        directions /= np.linalg.norm(directions, axis=2, keepdims=True)
        modes = means[:, None, :] + mode_scatter * directions

        matrix = rotation_in_random_planes(
            input_dim, np.deg2rad(rotation_angle_deg), rng
        )
        offset = rng.standard_normal(input_dim)
        norm = float(np.linalg.norm(offset))
        offset = offset * (shift_offset_scale / norm) if norm > 0 else offset

        return cls(
            num_categories=num_categories,
            input_dim=input_dim,
            class_means=means,
            mode_centers=modes,
            class_spread=np.full(num_categories, float(class_spread)),
            shift_matrix=matrix,
            shift_offset=offset,
            target_noise=float(target_noise),
            class_frequencies=zipf_frequencies(num_categories, zipf_exponent),
            seed=seed,
        )


@dataclass
class ImageSample:
    """Instances of one synthetic image: raw inputs, labels, boxes."""

    inputs: np.ndarray  # (n, input_dim)
    categories: np.ndarray  # (n,), values in 1..C
    boxes: List[BBox] = field(default_factory=list)

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _random_box(rng: np.random.Generator) -> BBox:
    w, h = rng.uniform(0.05, 0.35, size=2)
    x1 = rng.uniform(0.0, 1.0 - w)
    y1 = rng.uniform(0.0, 1.0 - h)
    return BBox(float(x1), float(y1), float(x1 + w), float(y1 + h))


def generate_batch(
    world: SyntheticWorld,
    domain: str,
    n_images: int,
    instances_per_image: Tuple[int, int],
    rng: np.random.Generator,
) -> List[ImageSample]:
    """Draw synthetic images; target-domain inputs go through the shift map.

    Fully determined by the generator state, so a fixed seed and draw order
    reproduce batches exactly.
    """
    if domain not in (SOURCE, TARGET):
        raise ValueError(f"domain must be {SOURCE!r} or {TARGET!r}")
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    lo, hi = instances_per_image
    if not 1 <= lo <= hi:
        raise ValueError(f"bad instances_per_image range ({lo}, {hi})")

    images = []
    for _ in range(n_images):
        n = int(rng.integers(lo, hi + 1))
        cats = rng.choice(world.num_categories, size=n, p=world.class_frequencies) + 1
        images.append(_sample_instances(world, domain, cats, rng))
    return images


def _sample_instances(
    world: SyntheticWorld,
    domain: str,
    categories: np.ndarray,
    rng: np.random.Generator,
) -> ImageSample:
    idx = categories - 1
    modes = rng.integers(world.modes_per_category, size=len(categories))
    inputs = world.mode_centers[idx, modes] + world.class_spread[idx, None] * (
        rng.standard_normal((len(categories), world.input_dim))
    )
    if domain == TARGET:
        inputs = inputs @ world.shift_matrix.T + world.shift_offset
        inputs = inputs + world.target_noise * rng.standard_normal(inputs.shape)
    boxes = [_random_box(rng) for _ in range(len(categories))]
    return ImageSample(inputs, categories.astype(np.int64), boxes)


def generate_dataset(
    world: SyntheticWorld,
    domain: str,
    n_images: int,
    instances_per_image: Tuple[int, int],
    rng: np.random.Generator,
    min_per_category: int = 0,
) -> List[ImageSample]:
    """Zipf-sampled dataset, optionally topped up so every category reaches
    a minimum instance count (single-instance images appended per category,
    ascending category order)."""
    images = generate_batch(world, domain, n_images, instances_per_image, rng)
    if min_per_category > 0:
        counts = category_counts(images)
        for c in range(1, world.num_categories + 1):
            for _ in range(min_per_category - counts.get(c, 0)):
                cats = np.array([c], dtype=np.int64)
                images.append(_sample_instances(world, domain, cats, rng))
    return images


def category_counts(images: Sequence[ImageSample]) -> Dict[int, int]:
    counts: Dict[int, int] = {}
    for image in images:
        for c in image.categories.tolist():
            counts[c] = counts.get(c, 0) + 1
    return counts
