"""Ingestion, encoding, splitting and synthetic generation of CTR data."""
from .records import CRITEO_SCHEMA, RawRecord, RawSchema, parse_line, parse_tsv
from .preprocessing import (
    MISSING_TOKEN,
    OOV_INDEX,
    Vocabulary,
    build_vocab,
    criteo_transform,
    discretize_numeric,
    get_transform,
    register_transform,
    registered_transforms,
)
from .dataset import (
    DataSplits,
    EncodedDataset,
    batches,
    encode_records,
    split,
    split_assignment,
    splits_from_assignment,
)
from .synthetic import (
    SyntheticSpec,
    build_teacher,
    generate_synthetic,
    generate_synthetic_with_oracle,
)
from .cache import EncodedCache, content_digest, load_encoded, save_encoded
