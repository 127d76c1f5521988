"""Synthetic click data with a planted fusion structure."""
import logging
from dataclasses import dataclass

import numpy as np

from optfusion.model.architecture import ArchitectureDescriptor
from optfusion.model.components import FieldSchema
from optfusion.model.supernet import OptFusionSupernet, SupernetConfig
from .dataset import EncodedDataset


@dataclass(frozen=True)
class SyntheticSpec:
    """Sizes, teacher architecture and noise of a synthetic dataset.

    Labels are Bernoulli draws from a teacher model with the given fixed
    architecture and weights drawn from ``teacher_seed``; a fraction
    ``label_noise`` of them is then flipped. Row features come from ``seed``.
    """

    teacher: ArchitectureDescriptor
    num_fields: int = 10
    vocab_size: int = 100
    num_samples: int = 200_000
    emb_dim: int = 8
    teacher_seed: int = 0
    seed: int = 0
    label_noise: float = 0.0
    weight_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.num_fields < 1:
            raise ValueError("num_fields must be >= 1")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if not 0.0 <= self.label_noise <= 1.0:
            raise ValueError(f"label_noise must lie in [0, 1], got {self.label_noise}")
        self.teacher.validate()

    @property
    def field_schema(self) -> FieldSchema:
        return FieldSchema((self.vocab_size,) * self.num_fields, self.emb_dim)


def build_teacher(spec: SyntheticSpec) -> OptFusionSupernet:
    """The frozen model that labels the data, rebuilt deterministically."""
    config = SupernetConfig(
        n=spec.teacher.n,
        emb_dim=spec.emb_dim,
        with_s0=spec.teacher.with_s0,
        mode="fixed",
        op_set=spec.teacher.op_set,
        weight_scale=spec.weight_scale,
    )
    return OptFusionSupernet(
        config,
        spec.field_schema,
        spec.teacher,
        seed=spec.teacher_seed,
        real_t=np.float64,
    )


def generate_synthetic_with_oracle(
    spec: SyntheticSpec,
) -> tuple[EncodedDataset, np.ndarray, np.ndarray]:
    """Dataset plus the teacher probabilities and the noiseless labels."""
    rng = np.random.default_rng(spec.seed)
    indices = rng.integers(0, spec.vocab_size, size=(spec.num_samples, spec.num_fields))
    probabilities = build_teacher(spec).predict_proba(indices)
    clean_labels = (rng.random(spec.num_samples) < probabilities).astype(np.int8)
    flips = rng.random(spec.num_samples) < spec.label_noise
    labels = np.where(flips, 1 - clean_labels, clean_labels).astype(np.int8)
    dataset = EncodedDataset(indices, labels, spec.field_schema.vocab_sizes)
    logging.getLogger(__name__).info(
        f"synthetic dataset: {spec.num_samples} rows, positive ratio "
        f"{dataset.positive_ratio:.4f}, {int(flips.sum())} flipped labels"
    )
    return dataset, probabilities, clean_labels


def generate_synthetic(spec: SyntheticSpec) -> EncodedDataset:
    return generate_synthetic_with_oracle(spec)[0]
