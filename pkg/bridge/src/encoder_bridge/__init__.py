"""Image-constant embedding exporter for the rule engine's sidecar contract."""

from encoder_bridge.encoders import ENCODERS, EncoderUnavailable, get_encoder
from encoder_bridge.export import BridgeError, export_embeddings, read_manifest

__all__ = [
    "ENCODERS",
    "EncoderUnavailable",
    "BridgeError",
    "export_embeddings",
    "get_encoder",
    "read_manifest",
]

__version__ = "0.1.0"
