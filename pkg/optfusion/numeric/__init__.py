"""OptFusion numeric kernels."""
