"""OptFusion: learning fusion connections and operations in deep CTR models."""
