"""HTTP inference sidecar for the vil pipeline.

Serves /generate, /scene_embed, /detect, and /vl_score with bodies that
validate against the vil.wire schemas, plus a /health route reporting
model identities and the embedding dimension. Ships procedural
reference models so the service runs without any ML runtime; real model
adapters register under new names in sidecar.models.
"""

from .app import SidecarApp, make_server
from .models import ModelLoadError, ModelSet, load_models

__all__ = [
    "ModelLoadError",
    "ModelSet",
    "SidecarApp",
    "load_models",
    "make_server",
]
