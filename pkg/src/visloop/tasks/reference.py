"""Published reference results for the full system, kept as citation metadata.

These come from runs with a hosted multimodal model and a foundation
segmenter at full scale. They are not targets for local runs.
"""

REFERENCE = {
    "counting": {"success_rate": 0.853, "mean_error": 0.19, "variance": 0.22},
    "jigsaw": {"completion_rate_4": 0.682, "completion_rate_6": 0.515},
    "placement": {"locating_rate": 0.694, "placement_rate": 0.373},
    "qa": {"accuracy": 0.65},
}


def reference_row(kind: str) -> dict:
    """Reference metrics for ``kind`` tagged with their source."""
    return {"source": "published reference", **REFERENCE[kind]}
