"""findinglab: cluster, classify, and attribute model-validation findings."""

__version__ = "0.1.0"
